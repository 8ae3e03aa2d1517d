#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "icgan/io.hpp"
#include "icgan/tensor.hpp"

namespace icgan {

// Versioned container: a JSON metadata block plus named f64 tensors. The
// byte stream is a pure function of the content, so identical checkpoints
// are identical files.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw std::out_of_range("checkpoint: no tensor named '" + name + "'");
  }
};

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& [name, t] : ck.tensors)
    manifest.push_back({{"name", name}, {"shape", t.shape}});
  nlohmann::json head{{"meta", ck.meta}, {"tensors", manifest}};
  std::string head_str = head.dump();
  f.write("ICGN", 4);
  io::write_u32(f, Checkpoint::kVersion);
  io::write_u64(f, head_str.size());
  f.write(head_str.data(), static_cast<std::streamsize>(head_str.size()));
  for (const auto& [name, t] : ck.tensors)
    for (double v : t.data) io::write_f64(f, v);
  if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  char magic[4] = {0, 0, 0, 0};
  f.read(magic, 4);
  if (f.gcount() != 4 || std::string(magic, 4) != "ICGN")
    throw std::runtime_error("'" + path + "' is not a checkpoint file");
  std::uint32_t version = io::read_u32(f, "checkpoint version");
  if (version != Checkpoint::kVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version) + " (supported: " +
                             std::to_string(Checkpoint::kVersion) + ")");
  std::uint64_t head_len = io::read_u64(f, "header length");
  std::string head_str(head_len, '\0');
  if (!f.read(head_str.data(), static_cast<std::streamsize>(head_len)))
    throw std::runtime_error("truncated while reading checkpoint header");
  nlohmann::json head;
  try {
    head = nlohmann::json::parse(head_str);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("checkpoint header is not valid JSON: ") +
                             e.what());
  }
  Checkpoint ck;
  ck.meta = head.at("meta");
  for (const auto& entry : head.at("tensors")) {
    std::string name = entry.at("name").get<std::string>();
    std::vector<std::size_t> shape =
        entry.at("shape").get<std::vector<std::size_t>>();
    Tensor t = Tensor::zeros(shape);
    for (double& v : t.data) v = io::read_f64(f, ("tensor '" + name + "'").c_str());
    ck.tensors.emplace_back(std::move(name), std::move(t));
  }
  // anything left over means the manifest and payload disagree
  char probe;
  if (f.read(&probe, 1))
    throw std::runtime_error("checkpoint payload is larger than its manifest");
  return ck;
}

}  // namespace icgan
