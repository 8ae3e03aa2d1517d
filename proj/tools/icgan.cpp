#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "icgan/experiment.hpp"

namespace {

using icgan::DatasetSpec;
using icgan::ExperimentConfig;

// Flags override whatever the config file set; anything not passed keeps the
// config (or default) value. The config file is applied before CLI11 binds,
// so the struct fields double as per-flag defaults.
ExperimentConfig preload_config(int argc, char** argv) {
  ExperimentConfig cfg;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      std::ifstream f(argv[i + 1]);
      if (!f) throw std::runtime_error(std::string("cannot open config '") +
                                       argv[i + 1] + "'");
      icgan::json j;
      f >> j;
      cfg = j.get<ExperimentConfig>();
    }
  }
  return cfg;
}

// seed_flag is explicit because "--seed" means the training seed on the train
// subcommand but the dataset seed on make-dataset
void add_dataset_flags(CLI::App* cmd, DatasetSpec& d, const std::string& prefix,
                       std::string& kind_str, const std::string& seed_flag) {
  kind_str = icgan::to_string(d.kind);
  cmd->add_option("--" + prefix + "kind", kind_str,
                  "dataset kind: ring8, grid25, longtail_mixture, shifted_mixture");
  cmd->add_option("--" + prefix + "n-per-class", d.n_per_class);
  cmd->add_option("--" + prefix + "std", d.component_std);
  cmd->add_option("--" + prefix + "radius", d.radius);
  cmd->add_option("--" + prefix + "n-classes", d.n_classes);
  cmd->add_option("--" + prefix + "alpha", d.alpha);
  cmd->add_option("--" + prefix + "base-count", d.base_count);
  cmd->add_option("--" + prefix + "min-count", d.min_count);
  cmd->add_option("--" + prefix + "shift-x", d.shift_x);
  cmd->add_option("--" + prefix + "shift-y", d.shift_y);
  cmd->add_option("--" + prefix + "rotation", d.rotation);
  cmd->add_option(seed_flag, d.seed);
}

void add_eval_flags(CLI::App* cmd, icgan::EvalSpec& e, std::string& method_str) {
  method_str = icgan::to_string(e.method);
  cmd->add_option("--n-instances", e.n_instances);
  cmd->add_option("--selection", method_str, "instance selection: random, clustered");
  cmd->add_option("--samples-per-instance", e.samples_per_instance);
  cmd->add_option("--k-pr", e.k_pr);
  cmd->add_option("--eval-seed", e.seed);
  cmd->add_option("--reference-seed", e.reference_seed);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    ExperimentConfig cfg = preload_config(argc, argv);

    CLI::App app{"instance-conditioned GAN on low-dimensional mixtures"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON experiment config")
        ->expected(1);

    std::string ds_kind, emb_kind, loss_str, method_str, tgt_kind;
    double balance_temp = 2.0;

    auto add_train_flags = [&](CLI::App* cmd) {
      add_dataset_flags(cmd, cfg.dataset, "", ds_kind, "--data-seed");
      emb_kind = icgan::to_string(cfg.embedder.kind);
      cmd->add_option("--embedder", emb_kind,
                      "embedder kind: identity, random_projection, pca");
      cmd->add_option("--embedder-dim", cfg.embedder.output_dim);
      cmd->add_option("--embedder-seed", cfg.embedder.seed);
      cmd->add_option("--z-dim", cfg.model.z_dim);
      cmd->add_option("--o-dim", cfg.model.o_dim);
      cmd->add_option("--c-dim", cfg.model.c_dim);
      cmd->add_option("--n-dim", cfg.model.n_dim);
      cmd->add_option("--g-hidden", cfg.model.g_hidden)->delimiter(',');
      cmd->add_option("--d-hidden", cfg.model.d_hidden)->delimiter(',');
      cmd->add_option("--leaky-slope", cfg.model.leaky_slope);
      cmd->add_option("--k", cfg.train.k);
      loss_str = icgan::to_string(cfg.train.loss);
      cmd->add_option("--loss", loss_str,
                      "loss: logistic_nonsaturating, logistic_saturating, hinge");
      cmd->add_option("--g-lr", cfg.train.g_lr);
      cmd->add_option("--d-lr", cfg.train.d_lr);
      cmd->add_option("--d-updates", cfg.train.d_updates);
      cmd->add_option("--batch-size", cfg.train.batch_size);
      cmd->add_option("--steps", cfg.train.steps);
      cmd->add_option("--seed", cfg.train.seed);
      cmd->add_flag("--flip-augmentation", cfg.train.flip_augmentation);
      cmd->add_flag("--class-conditional", cfg.train.class_conditional);
      cmd->add_flag("--constant-conditioning", cfg.train.constant_conditioning);
      cmd->add_option("--balance-temperature", balance_temp);
      cmd->add_option("--eval-interval", cfg.eval_interval);
      add_eval_flags(cmd, cfg.eval, method_str);
      cmd->add_option("--output-dir", cfg.output_dir);
    };

    CLI::App* c_train = app.add_subcommand("train", "train a model");
    c_train->fallthrough();
    add_train_flags(c_train);

    CLI::App* c_eval = app.add_subcommand("eval", "evaluate a checkpoint");
    c_eval->fallthrough();
    std::string ckpt_path, eval_out;
    c_eval->add_option("--checkpoint", ckpt_path)->required();
    std::string eval_method_str;
    icgan::EvalSpec eval_spec;
    add_eval_flags(c_eval, eval_spec, eval_method_str);
    c_eval->add_option("--output-dir", eval_out);

    CLI::App* c_ablate = app.add_subcommand("ablate", "sweep k and n_instances");
    c_ablate->fallthrough();
    std::vector<std::size_t> n_grid{10, 100, 800}, k_grid{5, 50, 500};
    add_train_flags(c_ablate);
    c_ablate->add_option("--n-grid", n_grid)->delimiter(',');
    c_ablate->add_option("--k-grid", k_grid)->delimiter(',');

    CLI::App* c_transfer =
        app.add_subcommand("transfer", "condition a checkpoint on a new dataset");
    c_transfer->fallthrough();
    std::string tr_ckpt, tr_out;
    DatasetSpec target;
    target.kind = icgan::DatasetKind::shifted_mixture;
    c_transfer->add_option("--checkpoint", tr_ckpt)->required();
    add_dataset_flags(c_transfer, target, "target-", tgt_kind, "--target-seed");
    c_transfer->add_option("--output-dir", tr_out);

    CLI::App* c_make = app.add_subcommand("make-dataset", "write a dataset file");
    c_make->fallthrough();
    std::string out_path = "dataset.txt";
    bool binary = false;
    std::string mk_kind;
    add_dataset_flags(c_make, cfg.dataset, "", mk_kind, "--seed");
    c_make->add_option("--out", out_path);
    c_make->add_flag("--binary", binary, "write the binary format");

    app.parse(argc, argv);

    if (c_train->parsed() || c_ablate->parsed()) {
      CLI::App* cmd = c_train->parsed() ? c_train : c_ablate;
      cfg.dataset.kind = icgan::dataset_kind_from_string(ds_kind);
      cfg.embedder.kind = icgan::embedder_kind_from_string(emb_kind);
      cfg.train.loss = icgan::loss_variant_from_string(loss_str);
      cfg.eval.method = icgan::selection_method_from_string(method_str);
      if (cmd->count("--balance-temperature"))
        cfg.train.balance_temperature = balance_temp;
      if (c_train->parsed()) return icgan::cmd_train(cfg);
      return icgan::cmd_ablate(cfg, n_grid, k_grid, cfg.output_dir);
    }
    if (c_eval->parsed()) {
      eval_spec.method = icgan::selection_method_from_string(eval_method_str);
      return icgan::cmd_eval(ckpt_path, eval_spec, eval_out);
    }
    if (c_transfer->parsed()) {
      target.kind = icgan::dataset_kind_from_string(tgt_kind);
      return icgan::cmd_transfer(tr_ckpt, target, tr_out);
    }
    if (c_make->parsed()) {
      cfg.dataset.kind = icgan::dataset_kind_from_string(mk_kind);
      return icgan::cmd_make_dataset(cfg.dataset, out_path, binary);
    }
    return 1;
  } catch (const CLI::ParseError& e) {
    return CLI::App{}.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
