#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "icgan/checkpoint.hpp"
#include "icgan/datasets.hpp"
#include "icgan/evaluate.hpp"
#include "icgan/training.hpp"

namespace icgan {

using nlohmann::json;

// --- config <-> JSON ---

inline void to_json(json& j, const DatasetSpec& s) {
  j = json{{"kind", to_string(s.kind)},
           {"n_per_class", s.n_per_class},
           {"component_std", s.component_std},
           {"radius", s.radius},
           {"n_classes", s.n_classes},
           {"alpha", s.alpha},
           {"base_count", s.base_count},
           {"min_count", s.min_count},
           {"shift_x", s.shift_x},
           {"shift_y", s.shift_y},
           {"rotation", s.rotation},
           {"seed", s.seed}};
}

inline void from_json(const json& j, DatasetSpec& s) {
  DatasetSpec d;
  s.kind = dataset_kind_from_string(j.value("kind", std::string(to_string(d.kind))));
  s.n_per_class = j.value("n_per_class", d.n_per_class);
  s.component_std = j.value("component_std", d.component_std);
  s.radius = j.value("radius", d.radius);
  s.n_classes = j.value("n_classes", d.n_classes);
  s.alpha = j.value("alpha", d.alpha);
  s.base_count = j.value("base_count", d.base_count);
  s.min_count = j.value("min_count", d.min_count);
  s.shift_x = j.value("shift_x", d.shift_x);
  s.shift_y = j.value("shift_y", d.shift_y);
  s.rotation = j.value("rotation", d.rotation);
  s.seed = j.value("seed", d.seed);
}

inline void to_json(json& j, const EmbedderSpec& s) {
  j = json{{"kind", to_string(s.kind)},
           {"output_dim", s.output_dim},
           {"seed", s.seed}};
}

inline void from_json(const json& j, EmbedderSpec& s) {
  EmbedderSpec d;
  s.kind = embedder_kind_from_string(j.value("kind", std::string(to_string(d.kind))));
  s.output_dim = j.value("output_dim", d.output_dim);
  s.seed = j.value("seed", d.seed);
}

inline void to_json(json& j, const ModelConfig& m) {
  j = json{{"z_dim", m.z_dim},       {"o_dim", m.o_dim},
           {"c_dim", m.c_dim},       {"n_dim", m.n_dim},
           {"g_hidden", m.g_hidden}, {"d_hidden", m.d_hidden},
           {"leaky_slope", m.leaky_slope}};
}

inline void from_json(const json& j, ModelConfig& m) {
  ModelConfig d;
  m.z_dim = j.value("z_dim", d.z_dim);
  m.o_dim = j.value("o_dim", d.o_dim);
  m.c_dim = j.value("c_dim", d.c_dim);
  m.n_dim = j.value("n_dim", d.n_dim);
  m.g_hidden = j.value("g_hidden", d.g_hidden);
  m.d_hidden = j.value("d_hidden", d.d_hidden);
  m.leaky_slope = j.value("leaky_slope", d.leaky_slope);
}

inline void to_json(json& j, const TrainConfig& c) {
  j = json{{"k", c.k},
           {"loss", to_string(c.loss)},
           {"g_lr", c.g_lr},
           {"d_lr", c.d_lr},
           {"d_updates", c.d_updates},
           {"batch_size", c.batch_size},
           {"steps", c.steps},
           {"seed", c.seed},
           {"flip_augmentation", c.flip_augmentation},
           {"class_conditional", c.class_conditional},
           {"constant_conditioning", c.constant_conditioning},
           {"adam_beta1", c.adam_beta1},
           {"adam_beta2", c.adam_beta2},
           {"adam_eps", c.adam_eps}};
  if (c.balance_temperature) j["balance_temperature"] = *c.balance_temperature;
}

inline void from_json(const json& j, TrainConfig& c) {
  TrainConfig d;
  c.k = j.value("k", d.k);
  c.loss = loss_variant_from_string(j.value("loss", std::string(to_string(d.loss))));
  c.g_lr = j.value("g_lr", d.g_lr);
  c.d_lr = j.value("d_lr", d.d_lr);
  c.d_updates = j.value("d_updates", d.d_updates);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.steps = j.value("steps", d.steps);
  c.seed = j.value("seed", d.seed);
  c.flip_augmentation = j.value("flip_augmentation", d.flip_augmentation);
  c.class_conditional = j.value("class_conditional", d.class_conditional);
  c.constant_conditioning = j.value("constant_conditioning", d.constant_conditioning);
  c.adam_beta1 = j.value("adam_beta1", d.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", d.adam_beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
  if (j.contains("balance_temperature") && !j["balance_temperature"].is_null())
    c.balance_temperature = j["balance_temperature"].get<double>();
  else
    c.balance_temperature.reset();
}

struct EvalSpec {
  std::size_t n_instances = 100;
  SelectionMethod method = SelectionMethod::clustered;
  std::size_t samples_per_instance = 8;
  std::size_t k_pr = 3;
  std::uint64_t seed = 1;
  std::uint64_t reference_seed = 0;  // 0 picks dataset seed + 1
};

inline void to_json(json& j, const EvalSpec& e) {
  j = json{{"n_instances", e.n_instances},
           {"method", to_string(e.method)},
           {"samples_per_instance", e.samples_per_instance},
           {"k_pr", e.k_pr},
           {"seed", e.seed},
           {"reference_seed", e.reference_seed}};
}

inline void from_json(const json& j, EvalSpec& e) {
  EvalSpec d;
  e.n_instances = j.value("n_instances", d.n_instances);
  e.method =
      selection_method_from_string(j.value("method", std::string(to_string(d.method))));
  e.samples_per_instance = j.value("samples_per_instance", d.samples_per_instance);
  e.k_pr = j.value("k_pr", d.k_pr);
  e.seed = j.value("seed", d.seed);
  e.reference_seed = j.value("reference_seed", d.reference_seed);
}

struct ExperimentConfig {
  DatasetSpec dataset;
  EmbedderSpec embedder;
  ModelConfig model;
  TrainConfig train;
  EvalSpec eval;
  std::size_t eval_interval = 0;  // 0 means final eval only
  std::string output_dir;
};

inline void to_json(json& j, const ExperimentConfig& c) {
  j = json{{"dataset", c.dataset}, {"embedder", c.embedder},
           {"model", c.model},     {"train", c.train},
           {"eval", c.eval},       {"eval_interval", c.eval_interval},
           {"output_dir", c.output_dir}};
}

inline void from_json(const json& j, ExperimentConfig& c) {
  if (j.contains("dataset")) c.dataset = j["dataset"].get<DatasetSpec>();
  if (j.contains("embedder")) c.embedder = j["embedder"].get<EmbedderSpec>();
  if (j.contains("model")) c.model = j["model"].get<ModelConfig>();
  if (j.contains("train")) c.train = j["train"].get<TrainConfig>();
  if (j.contains("eval")) c.eval = j["eval"].get<EvalSpec>();
  c.eval_interval = j.value("eval_interval", c.eval_interval);
  c.output_dir = j.value("output_dir", c.output_dir);
}

inline json eval_report_to_json(const EvalReport& r) {
  json j{{"fid", r.fid},
         {"precision", r.precision},
         {"recall", r.recall},
         {"n_generated", r.n_generated},
         {"n_reference", r.n_reference}};
  if (r.diversity) j["diversity"] = *r.diversity;
  else j["diversity"] = nullptr;
  if (!r.stratified.empty()) {
    j["stratified"] = r.stratified;
    j["stratified_n_real"] = r.stratified_n_real;
    j["stratified_n_gen"] = r.stratified_n_gen;
  }
  return j;
}

// Output root resolution: an explicit value wins, then the environment
// variable ICGAN_OUTPUT_DIR, then the working directory.
inline std::string resolve_output_root(const std::string& explicit_dir) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv("ICGAN_OUTPUT_DIR"); env && *env) return env;
  return ".";
}

// --- model checkpoints ---

inline Checkpoint make_model_checkpoint(const ExperimentConfig& cfg,
                                        const GeneratorParams& g,
                                        const DiscriminatorParams& d,
                                        const Embedder& emb, std::size_t step) {
  Checkpoint ck;
  ck.meta["experiment"] = cfg;
  ck.meta["step"] = step;
  ck.meta["generator"] = json{{"z_dim", g.cfg.z_dim},
                              {"embed_dim", g.cfg.embed_dim},
                              {"o_dim", g.cfg.o_dim},
                              {"c_dim", g.cfg.c_dim},
                              {"n_classes", g.cfg.n_classes},
                              {"hidden", g.cfg.hidden},
                              {"out_dim", g.cfg.out_dim},
                              {"leaky_slope", g.cfg.leaky_slope}};
  ck.meta["discriminator"] = json{{"in_dim", d.cfg.in_dim},
                                  {"embed_dim", d.cfg.embed_dim},
                                  {"n_dim", d.cfg.n_dim},
                                  {"c_dim", d.cfg.c_dim},
                                  {"n_classes", d.cfg.n_classes},
                                  {"hidden", d.cfg.hidden},
                                  {"leaky_slope", d.cfg.leaky_slope}};
  ck.meta["embedder"] =
      json{{"spec", cfg.embedder}, {"input_dim", emb.input_dim}};
  g.for_each([&](const char* name, const Tensor& t) {
    ck.tensors.emplace_back(name, t);
  });
  d.for_each([&](const char* name, const Tensor& t) {
    ck.tensors.emplace_back(name, t);
  });
  if (emb.projection.numel()) ck.tensors.emplace_back("emb.projection", emb.projection);
  if (emb.mean.numel()) ck.tensors.emplace_back("emb.mean", emb.mean);
  return ck;
}

struct LoadedModel {
  ExperimentConfig cfg;
  GeneratorParams g;
  DiscriminatorParams d;
  Embedder embedder;
  std::size_t step = 0;
};

inline LoadedModel unpack_model_checkpoint(const Checkpoint& ck) {
  LoadedModel m;
  m.cfg = ck.meta.at("experiment").get<ExperimentConfig>();
  m.step = ck.meta.at("step").get<std::size_t>();

  const json& gj = ck.meta.at("generator");
  GeneratorConfig gc;
  gc.z_dim = gj.at("z_dim");
  gc.embed_dim = gj.at("embed_dim");
  gc.o_dim = gj.at("o_dim");
  gc.c_dim = gj.at("c_dim");
  gc.n_classes = gj.at("n_classes");
  gc.hidden = gj.at("hidden").get<std::vector<std::size_t>>();
  gc.out_dim = gj.at("out_dim");
  gc.leaky_slope = gj.at("leaky_slope");
  m.g = init_generator(gc, 0);

  const json& dj = ck.meta.at("discriminator");
  DiscriminatorConfig dc;
  dc.in_dim = dj.at("in_dim");
  dc.embed_dim = dj.at("embed_dim");
  dc.n_dim = dj.at("n_dim");
  dc.c_dim = dj.at("c_dim");
  dc.n_classes = dj.at("n_classes");
  dc.hidden = dj.at("hidden").get<std::vector<std::size_t>>();
  dc.leaky_slope = dj.at("leaky_slope");
  m.d = init_discriminator(dc, 0);

  auto restore = [&](const char* name, Tensor& t) {
    const Tensor& src = ck.tensor(name);
    if (!src.same_shape(t))
      throw std::runtime_error("checkpoint tensor '" + std::string(name) +
                               "' has shape " + src.shape_str() + ", expected " +
                               t.shape_str());
    t = src;
  };
  m.g.for_each(restore);
  m.d.for_each(restore);

  const json& ej = ck.meta.at("embedder");
  m.embedder.spec = ej.at("spec").get<EmbedderSpec>();
  m.embedder.input_dim = ej.at("input_dim").get<std::size_t>();
  for (const auto& [name, t] : ck.tensors) {
    if (name == "emb.projection") m.embedder.projection = t;
    if (name == "emb.mean") m.embedder.mean = t;
  }
  return m;
}

// --- drivers ---

struct TrainArtifacts {
  RawDataset data;
  Embedder embedder;
  TrainResult result;
};

inline TrainArtifacts run_train(const ExperimentConfig& cfg,
                                const StepHook& hook = {}) {
  TrainArtifacts art;
  art.data = make_dataset(cfg.dataset);
  art.embedder = fit_embedder(art.data.data, cfg.embedder);
  art.result = train(cfg.train, cfg.model, art.data.data, art.data.labels,
                     art.embedder, hook);
  return art;
}

inline DatasetSpec reference_spec(const DatasetSpec& base, std::uint64_t override_seed) {
  DatasetSpec ref = base;
  ref.seed = override_seed != 0 ? override_seed : base.seed + 1;
  return ref;
}

// Score a generator against a fresh reference draw, conditioning on instances
// selected from the given dataset.
inline EvalReport run_eval_on(const GeneratorParams& g, const Embedder& emb,
                              const ExperimentConfig& cfg,
                              const DatasetSpec& instance_spec,
                              const DatasetSpec& ref_spec_resolved) {
  RawDataset inst = make_dataset(instance_spec);
  InstanceStore store = embed_all(emb, inst.data, inst.labels);
  SelectionResult sel =
      select_instances(store, cfg.eval.n_instances, cfg.eval.method, cfg.eval.seed);
  RawDataset ref = make_dataset(ref_spec_resolved);

  EvalOptions opt;
  opt.samples_per_instance = cfg.eval.samples_per_instance;
  opt.k_pr = cfg.eval.k_pr;
  opt.z_dim = g.cfg.z_dim;
  opt.seed = cfg.eval.seed;
  opt.class_conditional = cfg.train.class_conditional;
  opt.constant_conditioning = cfg.train.constant_conditioning;
  if (cfg.train.class_conditional)
    opt.train_class_counts = class_counts(inst.labels);
  std::optional<std::vector<int>> ref_labels;
  if (cfg.train.class_conditional) ref_labels = ref.labels;
  return evaluate(as_generator_fn(g), store, sel, ref.data, ref_labels, emb, opt);
}

inline EvalReport run_eval(const ExperimentConfig& cfg, const GeneratorParams& g,
                           const Embedder& emb) {
  return run_eval_on(g, emb, cfg, cfg.dataset,
                     reference_spec(cfg.dataset, cfg.eval.reference_seed));
}

struct TransferReport {
  double fid_source_instances_source_ref = 0.0;
  double fid_source_instances_target_ref = 0.0;
  double fid_target_instances_target_ref = 0.0;
};

inline void to_json(json& j, const TransferReport& r) {
  j = json{{"fid_source_instances_source_ref", r.fid_source_instances_source_ref},
           {"fid_source_instances_target_ref", r.fid_source_instances_target_ref},
           {"fid_target_instances_target_ref", r.fid_target_instances_target_ref}};
}

// Swap the conditioning instances to a new dataset without retraining, and
// report the three reference/instance combinations.
inline TransferReport run_transfer(const ExperimentConfig& cfg,
                                   const GeneratorParams& g, const Embedder& emb,
                                   const DatasetSpec& target) {
  if (cfg.train.class_conditional)
    throw std::invalid_argument("transfer: only unconditional models transfer "
                                "across datasets");
  DatasetSpec src_ref = reference_spec(cfg.dataset, cfg.eval.reference_seed);
  DatasetSpec tgt_ref = reference_spec(target, 0);
  TransferReport rep;
  rep.fid_source_instances_source_ref =
      run_eval_on(g, emb, cfg, cfg.dataset, src_ref).fid;
  rep.fid_source_instances_target_ref =
      run_eval_on(g, emb, cfg, cfg.dataset, tgt_ref).fid;
  rep.fid_target_instances_target_ref =
      run_eval_on(g, emb, cfg, target, tgt_ref).fid;
  return rep;
}

// --- commands (CLI entry points; also driven directly by tests) ---

namespace detail {

inline void write_json_file(const json& j, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  f << j.dump(2) << "\n";
}

}  // namespace detail

inline int cmd_train(ExperimentConfig cfg) {
  cfg.output_dir = resolve_output_root(cfg.output_dir);
  std::filesystem::path out(cfg.output_dir);
  std::filesystem::create_directories(out);
  detail::write_json_file(json(cfg), out / "config.json");

  TrainArtifacts art;
  art.data = make_dataset(cfg.dataset);
  art.embedder = fit_embedder(art.data.data, cfg.embedder);

  std::ofstream metrics(out / "metrics.jsonl");
  if (!metrics)
    throw std::runtime_error("cannot open '" + (out / "metrics.jsonl").string() +
                             "' for writing");
  StepHook hook = [&](const TrainState& st, const StepMetrics& m) {
    json rec{{"step", m.step}, {"d_loss", m.d_loss}, {"g_loss", m.g_loss}};
    if (cfg.eval_interval > 0 && (m.step + 1) % cfg.eval_interval == 0) {
      EvalReport r = run_eval(cfg, st.g, art.embedder);
      rec.update(eval_report_to_json(r));
    }
    metrics << rec.dump() << "\n";
  };
  art.result = train(cfg.train, cfg.model, art.data.data, art.data.labels,
                     art.embedder, hook);

  EvalReport final_report = run_eval(cfg, art.result.g, art.embedder);
  json final_rec = eval_report_to_json(final_report);
  final_rec["step"] = cfg.train.steps;
  metrics << final_rec.dump() << "\n";
  detail::write_json_file(final_rec, out / "eval.json");

  Checkpoint ck = make_model_checkpoint(cfg, art.result.g, art.result.d,
                                        art.embedder, cfg.train.steps);
  save_checkpoint(ck, (out / "checkpoint.bin").string());
  std::cout << "trained " << cfg.train.steps << " steps, fid "
            << final_report.fid << ", checkpoint at "
            << (out / "checkpoint.bin").string() << "\n";
  return 0;
}

inline int cmd_eval(const std::string& checkpoint_path, const EvalSpec& eval,
                    std::string output_dir) {
  LoadedModel m = unpack_model_checkpoint(load_checkpoint(checkpoint_path));
  m.cfg.eval = eval;
  EvalReport r = run_eval(m.cfg, m.g, m.embedder);
  output_dir = resolve_output_root(output_dir);
  std::filesystem::create_directories(output_dir);
  detail::write_json_file(eval_report_to_json(r),
                          std::filesystem::path(output_dir) / "eval.json");
  std::cout << eval_report_to_json(r).dump(2) << "\n";
  return 0;
}

inline std::vector<json> run_ablate(const ExperimentConfig& base,
                                    const std::vector<std::size_t>& n_grid,
                                    const std::vector<std::size_t>& k_grid) {
  std::vector<json> records;
  for (std::size_t k : k_grid) {
    ExperimentConfig cfg = base;
    cfg.train.k = k;
    std::optional<TrainArtifacts> art;
    std::string train_error;
    try {
      art = run_train(cfg);
    } catch (const std::exception& e) {
      train_error = e.what();
    }
    for (std::size_t n : n_grid) {
      json rec{{"k", k}, {"n_instances", n}};
      if (!art) {
        rec["error"] = train_error;
        records.push_back(rec);
        continue;
      }
      try {
        ExperimentConfig ecfg = cfg;
        ecfg.eval.n_instances = n;
        EvalReport r = run_eval(ecfg, art->result.g, art->embedder);
        rec.update(eval_report_to_json(r));
      } catch (const std::exception& e) {
        rec["error"] = e.what();
      }
      records.push_back(rec);
    }
  }
  return records;
}

inline int cmd_ablate(const ExperimentConfig& base,
                      const std::vector<std::size_t>& n_grid,
                      const std::vector<std::size_t>& k_grid,
                      std::string output_dir) {
  output_dir = resolve_output_root(output_dir);
  std::filesystem::create_directories(output_dir);
  std::ofstream f(std::filesystem::path(output_dir) / "ablate.jsonl");
  if (!f) throw std::runtime_error("cannot open ablate.jsonl for writing");
  for (const json& rec : run_ablate(base, n_grid, k_grid)) f << rec.dump() << "\n";
  std::cout << "wrote " << (n_grid.size() * k_grid.size()) << " cells\n";
  return 0;
}

inline int cmd_transfer(const std::string& checkpoint_path,
                        const DatasetSpec& target, std::string output_dir) {
  LoadedModel m = unpack_model_checkpoint(load_checkpoint(checkpoint_path));
  TransferReport r = run_transfer(m.cfg, m.g, m.embedder, target);
  output_dir = resolve_output_root(output_dir);
  std::filesystem::create_directories(output_dir);
  detail::write_json_file(json(r),
                          std::filesystem::path(output_dir) / "transfer.json");
  std::cout << json(r).dump(2) << "\n";
  return 0;
}

inline int cmd_make_dataset(const DatasetSpec& spec, const std::string& path,
                            bool binary) {
  RawDataset ds = make_dataset(spec);
  if (binary) save_dataset_binary(ds, path);
  else save_dataset_text(ds, path);
  std::cout << "wrote " << ds.data.rows() << " points to " << path << "\n";
  return 0;
}

}  // namespace icgan
