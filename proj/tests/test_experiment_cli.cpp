#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "icgan/experiment.hpp"

using icgan::json;
using icgan::Tensor;

namespace {

namespace fs = std::filesystem;

fs::path tmp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "icgan_exp_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// small enough that a full train+eval cycle is instant
icgan::ExperimentConfig tiny_cfg() {
  icgan::ExperimentConfig cfg;
  cfg.dataset.kind = icgan::DatasetKind::ring8;
  cfg.dataset.n_per_class = 8;
  cfg.dataset.seed = 5;
  cfg.embedder.kind = icgan::EmbedderKind::identity;
  cfg.embedder.output_dim = 2;
  cfg.model.z_dim = 4;
  cfg.model.o_dim = 8;
  cfg.model.c_dim = 4;
  cfg.model.n_dim = 8;
  cfg.model.g_hidden = {16};
  cfg.model.d_hidden = {16};
  cfg.train.k = 8;
  cfg.train.steps = 4;
  cfg.train.batch_size = 8;
  cfg.train.seed = 9;
  cfg.eval.n_instances = 16;
  cfg.eval.method = icgan::SelectionMethod::random;
  cfg.eval.samples_per_instance = 2;
  cfg.eval.k_pr = 2;
  cfg.eval.seed = 3;
  return cfg;
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  std::vector<json> out;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

json read_json(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  json j;
  f >> j;
  return j;
}

std::map<std::string, Tensor> collect_params(const icgan::GeneratorParams& g,
                                             const icgan::DiscriminatorParams& d) {
  std::map<std::string, Tensor> out;
  g.for_each([&](const char* n, const Tensor& t) { out.emplace(n, t); });
  d.for_each([&](const char* n, const Tensor& t) { out.emplace(n, t); });
  return out;
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(ICGAN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("experiment config survives a json round trip") {
  icgan::ExperimentConfig cfg;
  cfg.dataset.kind = icgan::DatasetKind::longtail_mixture;
  cfg.dataset.n_classes = 12;
  cfg.dataset.alpha = 1.25;
  cfg.dataset.base_count = 400;
  cfg.dataset.min_count = 7;
  cfg.embedder.kind = icgan::EmbedderKind::pca;
  cfg.embedder.output_dim = 2;
  cfg.embedder.seed = 44;
  cfg.model.g_hidden = {96, 48};
  cfg.train.loss = icgan::LossVariant::hinge;
  cfg.train.k = 33;
  cfg.train.class_conditional = true;
  cfg.train.balance_temperature = 1.75;
  cfg.eval.method = icgan::SelectionMethod::random;
  cfg.eval.n_instances = 55;
  cfg.eval_interval = 10;
  cfg.output_dir = "runs/test";

  json j = cfg;
  auto back = j.get<icgan::ExperimentConfig>();
  REQUIRE(json(back) == j);
  REQUIRE(back.train.balance_temperature.has_value());
  REQUIRE(*back.train.balance_temperature == 1.75);
  REQUIRE(back.dataset.kind == icgan::DatasetKind::longtail_mixture);
  REQUIRE(back.model.g_hidden == std::vector<std::size_t>({96, 48}));

  // missing optional stays unset; partial configs keep defaults elsewhere
  auto sparse = json{{"train", {{"k", 9}}}}.get<icgan::ExperimentConfig>();
  REQUIRE(sparse.train.k == 9);
  REQUIRE(!sparse.train.balance_temperature.has_value());
  REQUIRE(sparse.train.batch_size == icgan::TrainConfig{}.batch_size);
  REQUIRE(sparse.dataset.kind == icgan::DatasetKind::ring8);

  auto nulled = json{{"train", {{"balance_temperature", nullptr}}}}
                    .get<icgan::ExperimentConfig>();
  REQUIRE(!nulled.train.balance_temperature.has_value());
}

TEST_CASE("reference datasets default to the next seed") {
  icgan::DatasetSpec base;
  base.seed = 41;
  REQUIRE(icgan::reference_spec(base, 0).seed == 42);
  REQUIRE(icgan::reference_spec(base, 7).seed == 7);
  REQUIRE(icgan::reference_spec(base, 0).kind == base.kind);
}

TEST_CASE("output root prefers explicit dir, then environment") {
  REQUIRE(icgan::resolve_output_root("somewhere") == "somewhere");
  setenv("ICGAN_OUTPUT_DIR", "/tmp/icgan_env_root", 1);
  REQUIRE(icgan::resolve_output_root("explicit") == "explicit");
  REQUIRE(icgan::resolve_output_root("") == "/tmp/icgan_env_root");
  unsetenv("ICGAN_OUTPUT_DIR");
  REQUIRE(icgan::resolve_output_root("") == ".");
}

TEST_CASE("cmd_train writes the full artifact set") {
  auto out = tmp_dir("train_artifacts");
  auto cfg = tiny_cfg();
  cfg.eval_interval = 2;
  cfg.output_dir = out.string();
  REQUIRE(icgan::cmd_train(cfg) == 0);

  REQUIRE(fs::exists(out / "config.json"));
  REQUIRE(fs::exists(out / "metrics.jsonl"));
  REQUIRE(fs::exists(out / "eval.json"));
  REQUIRE(fs::exists(out / "checkpoint.bin"));

  REQUIRE(read_json(out / "config.json") == json(cfg));

  auto lines = read_jsonl(out / "metrics.jsonl");
  REQUIRE(lines.size() == 5);  // one per step plus the final report
  for (std::size_t s = 0; s < 4; ++s) {
    REQUIRE(lines[s].at("step") == s);
    REQUIRE(lines[s].contains("d_loss"));
    REQUIRE(lines[s].contains("g_loss"));
    // interval evals land on steps 1 and 3
    REQUIRE(lines[s].contains("fid") == (s % 2 == 1));
  }
  REQUIRE(lines[4].at("step") == 4);
  REQUIRE(lines[4].contains("fid"));

  auto eval = read_json(out / "eval.json");
  REQUIRE(eval.at("fid").get<double>() >= 0.0);
  REQUIRE(eval.at("n_generated") == 32);
  REQUIRE(eval.at("n_reference") == 64);
  REQUIRE(eval.contains("precision"));
  REQUIRE(eval.contains("recall"));

  auto ck = icgan::load_checkpoint((out / "checkpoint.bin").string());
  REQUIRE(ck.meta.at("step") == 4);
}

TEST_CASE("checkpoint unpack restores the trained model exactly") {
  auto cfg = tiny_cfg();
  auto art = icgan::run_train(cfg);
  auto ck = icgan::make_model_checkpoint(cfg, art.result.g, art.result.d,
                                         art.embedder, cfg.train.steps);
  auto p = tmp_dir("unpack") / "model.bin";
  icgan::save_checkpoint(ck, p.string());
  auto m = icgan::unpack_model_checkpoint(icgan::load_checkpoint(p.string()));

  REQUIRE(m.step == 4);
  REQUIRE(json(m.cfg) == json(cfg));

  auto live = collect_params(art.result.g, art.result.d);
  auto loaded = collect_params(m.g, m.d);
  REQUIRE(live.size() == loaded.size());
  for (const auto& [name, t] : live) {
    INFO(name);
    REQUIRE(loaded.count(name) == 1);
    REQUIRE(loaded.at(name).shape == t.shape);
    REQUIRE(loaded.at(name).data == t.data);
  }

  auto rng = icgan::make_rng(900);
  Tensor z = icgan::normal_tensor(rng, {3, cfg.model.z_dim});
  Tensor h = icgan::normal_tensor(rng, {3, 2});
  Tensor a = icgan::generate(art.result.g, z, h);
  Tensor b = icgan::generate(m.g, z, h);
  REQUIRE(a.data == b.data);

  REQUIRE(m.embedder.spec.kind == art.embedder.spec.kind);
  REQUIRE(m.embedder.input_dim == art.embedder.input_dim);
  REQUIRE(m.embedder.projection.data == art.embedder.projection.data);
}

TEST_CASE("training is bit-reproducible from config and seed") {
  auto cfg = tiny_cfg();
  auto a = icgan::run_train(cfg);
  auto b = icgan::run_train(cfg);
  auto pa = collect_params(a.result.g, a.result.d);
  auto pb = collect_params(b.result.g, b.result.d);
  for (const auto& [name, t] : pa) {
    INFO(name);
    REQUIRE(pb.at(name).data == t.data);
  }
  auto ra = icgan::run_eval(cfg, a.result.g, a.embedder);
  auto rb = icgan::run_eval(cfg, b.result.g, b.embedder);
  REQUIRE(ra.fid == rb.fid);
  REQUIRE(ra.precision == rb.precision);
  REQUIRE(ra.recall == rb.recall);
}

TEST_CASE("ablation sweeps record per-cell errors instead of dying") {
  auto cfg = tiny_cfg();
  cfg.train.steps = 2;
  // k=1000 exceeds the 64-point pool; n=4000 exceeds the store
  auto records = icgan::run_ablate(cfg, {8, 4000}, {4, 1000});
  REQUIRE(records.size() == 4);

  REQUIRE(records[0].at("k") == 4);
  REQUIRE(records[0].at("n_instances") == 8);
  REQUIRE(records[0].contains("fid"));
  REQUIRE(!records[0].contains("error"));

  REQUIRE(records[1].at("n_instances") == 4000);
  REQUIRE(records[1].contains("error"));
  REQUIRE(!records[1].contains("fid"));

  for (std::size_t i : {std::size_t(2), std::size_t(3)}) {
    REQUIRE(records[i].at("k") == 1000);
    REQUIRE(records[i].contains("error"));
  }
}

TEST_CASE("transfer reports all three instance/reference pairings") {
  auto cfg = tiny_cfg();
  auto art = icgan::run_train(cfg);

  icgan::DatasetSpec target;
  target.kind = icgan::DatasetKind::shifted_mixture;
  target.n_per_class = 8;
  target.shift_x = 3.0;
  target.seed = 11;

  auto rep = icgan::run_transfer(cfg, art.result.g, art.embedder, target);
  REQUIRE(std::isfinite(rep.fid_source_instances_source_ref));
  REQUIRE(std::isfinite(rep.fid_source_instances_target_ref));
  REQUIRE(std::isfinite(rep.fid_target_instances_target_ref));
  REQUIRE(rep.fid_source_instances_source_ref >= 0.0);

  json j = rep;
  REQUIRE(j.contains("fid_source_instances_source_ref"));
  REQUIRE(j.contains("fid_source_instances_target_ref"));
  REQUIRE(j.contains("fid_target_instances_target_ref"));

  auto cc = cfg;
  cc.train.class_conditional = true;
  REQUIRE_THROWS_AS(icgan::run_transfer(cc, art.result.g, art.embedder, target),
                    std::invalid_argument);
}

TEST_CASE("cmd_eval reloads a checkpoint and writes a report") {
  auto train_out = tmp_dir("eval_src");
  auto cfg = tiny_cfg();
  cfg.output_dir = train_out.string();
  REQUIRE(icgan::cmd_train(cfg) == 0);

  auto eval_out = tmp_dir("eval_dst");
  icgan::EvalSpec spec = cfg.eval;
  spec.n_instances = 8;
  REQUIRE(icgan::cmd_eval((train_out / "checkpoint.bin").string(), spec,
                          eval_out.string()) == 0);
  auto rep = read_json(eval_out / "eval.json");
  REQUIRE(rep.at("fid").get<double>() >= 0.0);
  REQUIRE(rep.at("n_generated") == 16);
}

TEST_CASE("cmd_make_dataset writes loadable files") {
  auto dir = tmp_dir("mkds");
  icgan::DatasetSpec spec;
  spec.n_per_class = 4;
  spec.seed = 2;
  REQUIRE(icgan::cmd_make_dataset(spec, (dir / "a.txt").string(), false) == 0);
  REQUIRE(icgan::cmd_make_dataset(spec, (dir / "a.bin").string(), true) == 0);
  auto t = icgan::load_dataset((dir / "a.txt").string());
  auto b = icgan::load_dataset((dir / "a.bin").string());
  REQUIRE(t.data.rows() == 32);
  REQUIRE(t.data.data == b.data.data);
  REQUIRE(t.labels == b.labels);
}

TEST_CASE("cli trains, respects the env output root, rejects bad flags") {
  auto dir = tmp_dir("cli");

  REQUIRE(run_cli("make-dataset --kind ring8 --n-per-class 3 --seed 4 --out " +
                  (dir / "ds.txt").string()) == 0);
  REQUIRE(icgan::load_dataset((dir / "ds.txt").string()).data.rows() == 24);

  std::string tiny_flags =
      "--n-per-class 8 --embedder identity --embedder-dim 2 --z-dim 4 --o-dim 8 "
      "--c-dim 4 --n-dim 8 --g-hidden 16 --d-hidden 16 --k 8 --steps 2 "
      "--batch-size 8 --n-instances 8 --samples-per-instance 2 --k-pr 2 "
      "--selection random";
  REQUIRE(run_cli("train " + tiny_flags + " --output-dir " +
                  (dir / "run1").string()) == 0);
  REQUIRE(fs::exists(dir / "run1" / "checkpoint.bin"));
  REQUIRE(fs::exists(dir / "run1" / "eval.json"));

  // no --output-dir: the environment variable decides
  std::string env_cmd = "ICGAN_OUTPUT_DIR=" + (dir / "run_env").string() + " " +
                        ICGAN_CLI_PATH + " train " + tiny_flags +
                        " >/dev/null 2>&1";
  int rc = std::system(env_cmd.c_str());
  REQUIRE(WIFEXITED(rc));
  REQUIRE(WEXITSTATUS(rc) == 0);
  REQUIRE(fs::exists(dir / "run_env" / "checkpoint.bin"));

  REQUIRE(run_cli("train --no-such-flag 1") != 0);
  REQUIRE(run_cli("") != 0);
  REQUIRE(run_cli("eval") != 0);  // --checkpoint is required
}

TEST_CASE("cli flags override the config file") {
  auto dir = tmp_dir("cli_config");
  auto cfg = tiny_cfg();
  cfg.train.steps = 3;
  cfg.train.g_lr = 0.00325;
  {
    std::ofstream f(dir / "cfg.json");
    f << json(cfg).dump(2) << "\n";
  }
  REQUIRE(run_cli("train --config " + (dir / "cfg.json").string() +
                  " --steps 2 --output-dir " + (dir / "out").string()) == 0);
  auto written = read_json(dir / "out" / "config.json");
  REQUIRE(written.at("train").at("steps") == 2);          // flag wins
  REQUIRE(written.at("train").at("g_lr") == 0.00325);     // config survives
  REQUIRE(written.at("dataset").at("n_per_class") == 8);  // config survives

  auto lines = read_jsonl(dir / "out" / "metrics.jsonl");
  REQUIRE(lines.size() == 3);  // 2 steps plus the final report
}
