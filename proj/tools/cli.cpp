// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "unicontrol/checkpoint.hpp"
#include "unicontrol/config.hpp"
#include "unicontrol/control.hpp"
#include "unicontrol/dataset.hpp"
#include "unicontrol/diffusion.hpp"
#include "unicontrol/gradcheck_suite.hpp"
#include "unicontrol/image_io.hpp"
#include "unicontrol/trainer.hpp"

namespace fs = std::filesystem;

namespace uc::cli {
namespace {

int datagen_threads() {
  if (const char* env = std::getenv("UNICONTROL_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return std::min(n, 64);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

struct LoadedModel {
  Config config;
  Model model;
  NoiseSchedule schedule;
};

LoadedModel model_from_checkpoint(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  LoadedModel lm{Config::parse_text(ckpt.config_text),
                 Model{}, NoiseSchedule{}};
  lm.model = init_model(lm.config.unet_config(), ControlConfig{}, TaskRegistry::standard(),
                        lm.config.seed);
  apply_checkpoint(lm.model, ckpt);
  lm.schedule = lm.config.schedule();
  return lm;
}

void emit_sample(const std::string& out_prefix, const Tensor& image, std::ostream& out) {
  write_ppm_grid(out_prefix + ".ppm", {image}, 1);
  write_tensor_file(out_prefix + ".bin", image);
  out << "wrote " << out_prefix << ".ppm and " << out_prefix << ".bin\n";
}

Tensor sample_with_adapter_features(const Model& model, const NoiseSchedule& schedule,
                                    const GuidanceConfig& guidance, const Tensor& features,
                                    const Tensor& instr_emb, const std::string& prompt,
                                    std::uint64_t seed) {
  const Tensor prompt_emb = encode_text(prompt);
  const GuidedDenoiseFn fn = [&](const Tensor& x_t, int t, bool with_text) {
    return controlled_denoise_features(model, x_t, t,
                                       with_text ? prompt_emb : null_text_embedding(), features,
                                       instr_emb);
  };
  const auto& cfg = model.unet;
  return ddim_sample(fn, schedule, guidance, seed,
                     {cfg.in_channels, cfg.image_size, cfg.image_size});
}

std::vector<std::string> split_keys(const std::string& csv) {
  std::vector<std::string> out;
  std::istringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::map<std::string, float> parse_weights(const std::string& spec) {
  std::map<std::string, float> out;
  std::size_t start = 0;
  while (start < spec.size()) {
    std::size_t comma = spec.find(',', start);
    if (comma == std::string::npos) comma = spec.size();
    const std::string pair = spec.substr(start, comma - start);
    const std::size_t eq = pair.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("bad --weights entry \"" + pair + "\" (expected task=value)");
    }
    out[pair.substr(0, eq)] = std::stof(pair.substr(eq + 1));
    start = comma + 1;
  }
  if (out.empty()) throw std::invalid_argument("--weights is empty");
  return out;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"unified multi-task controllable diffusion toolkit"};
  app.require_subcommand(1);

  // datagen
  auto* datagen = app.add_subcommand("datagen", "generate a procedural condition dataset");
  std::uint64_t dg_seed = 0;
  int dg_count = 64;
  int dg_size = 32;
  std::string dg_out;
  std::string dg_tasks = "hed,canny,seg,depth,normal,pose,hedsketch,bbox,outpainting";
  datagen->add_option("--seed", dg_seed, "dataset seed")->capture_default_str();
  datagen->add_option("--count", dg_count, "number of scenes")->capture_default_str();
  datagen->add_option("--out", dg_out, "output directory")->required();
  datagen->add_option("--tasks", dg_tasks, "comma-separated task keys")->capture_default_str();
  datagen->add_option("--size", dg_size, "canvas size")->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "train the multi-task model");
  std::string tr_config, tr_data, tr_out;
  train_cmd->add_option("--config", tr_config, "key=value config file")->required();
  train_cmd->add_option("--data", tr_data, "dataset directory")->required();
  train_cmd->add_option("--out", tr_out, "output directory")->required();

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "generate an image for a registered task");
  std::string s_ckpt, s_task, s_cond, s_prompt, s_out;
  double s_guidance = 9.0;
  int s_steps = 50;
  std::uint64_t s_seed = 0;
  sample_cmd->add_option("--ckpt", s_ckpt, "checkpoint file")->required();
  sample_cmd->add_option("--task", s_task, "task key")->required();
  sample_cmd->add_option("--cond", s_cond, "condition file (raw tensor or dataset record)")->required();
  sample_cmd->add_option("--prompt", s_prompt, "text prompt")->capture_default_str();
  sample_cmd->add_option("--out", s_out, "output prefix")->required();
  sample_cmd->add_option("--guidance", s_guidance, "guidance weight")->capture_default_str();
  sample_cmd->add_option("--steps", s_steps, "DDIM steps")->capture_default_str();
  sample_cmd->add_option("--seed", s_seed, "sampling seed")->capture_default_str();

  // sample-hybrid
  auto* hybrid_cmd = app.add_subcommand("sample-hybrid", "generate from two conditions at once");
  std::string h_ckpt, h_task_a, h_cond_a, h_task_b, h_cond_b, h_prompt, h_out;
  double h_guidance = 9.0;
  int h_steps = 50;
  std::uint64_t h_seed = 0;
  hybrid_cmd->add_option("--ckpt", h_ckpt, "checkpoint file")->required();
  hybrid_cmd->add_option("--task-a", h_task_a, "first task key")->required();
  hybrid_cmd->add_option("--cond-a", h_cond_a, "first condition file")->required();
  hybrid_cmd->add_option("--task-b", h_task_b, "second task key")->required();
  hybrid_cmd->add_option("--cond-b", h_cond_b, "second condition file")->required();
  hybrid_cmd->add_option("--prompt", h_prompt, "text prompt")->capture_default_str();
  hybrid_cmd->add_option("--out", h_out, "output prefix")->required();
  hybrid_cmd->add_option("--guidance", h_guidance, "guidance weight")->capture_default_str();
  hybrid_cmd->add_option("--steps", h_steps, "DDIM steps")->capture_default_str();
  hybrid_cmd->add_option("--seed", h_seed, "sampling seed")->capture_default_str();

  // sample-zeroshot
  auto* zs_cmd = app.add_subcommand("sample-zeroshot", "generate for an unseen condition type");
  std::string z_ckpt, z_cond, z_weights, z_instruction, z_prompt, z_out;
  double z_guidance = 9.0;
  int z_steps = 50;
  std::uint64_t z_seed = 0;
  zs_cmd->add_option("--ckpt", z_ckpt, "checkpoint file")->required();
  zs_cmd->add_option("--cond", z_cond, "condition file")->required();
  zs_cmd->add_option("--weights", z_weights, "manual task weights, e.g. depth=0.6,seg=0.3,canny=0.1");
  zs_cmd->add_option("--instruction", z_instruction, "new task instruction for similarity weights");
  zs_cmd->add_option("--prompt", z_prompt, "text prompt")->capture_default_str();
  zs_cmd->add_option("--out", z_out, "output prefix")->required();
  zs_cmd->add_option("--guidance", z_guidance, "guidance weight")->capture_default_str();
  zs_cmd->add_option("--steps", z_steps, "DDIM steps")->capture_default_str();
  zs_cmd->add_option("--seed", z_seed, "sampling seed")->capture_default_str();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "condition-fidelity evaluation");
  std::string e_ckpt, e_data, e_task;
  int e_n = 16;
  std::uint64_t e_seed = 1;
  double e_guidance = 9.0;
  int e_steps = 50;
  eval_cmd->add_option("--ckpt", e_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", e_data, "dataset directory (defines the task universe)")->required();
  eval_cmd->add_option("--task", e_task, "task key")->required();
  eval_cmd->add_option("--n", e_n, "number of held-out samples")->capture_default_str();
  eval_cmd->add_option("--seed", e_seed, "held-out scene seed")->capture_default_str();
  eval_cmd->add_option("--guidance", e_guidance, "guidance weight")->capture_default_str();
  eval_cmd->add_option("--steps", e_steps, "DDIM steps")->capture_default_str();

  // params
  auto* params_cmd = app.add_subcommand("params", "parameter accounting table");
  std::string p_config;
  params_cmd->add_option("--config", p_config, "key=value config file")->required();

  // gradcheck
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  std::uint64_t gc_seed = 7;
  gc_cmd->add_option("--seed", gc_seed, "check seed")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    err << app.help();
    return e.get_exit_code() == 0 ? 1 : e.get_exit_code();
  }

  try {
    if (*datagen) {
      const std::vector<std::string> task_list = split_keys(dg_tasks);
      DatagenConfig cfg;
      cfg.canvas = dg_size;
      const Manifest m = write_dataset(dg_out, dg_count, dg_seed, task_list, cfg, datagen_threads());
      out << "wrote " << m.entries.size() << " records to " << dg_out << "\n";
      return 0;
    }
    if (*train_cmd) {
      const Config cfg = Config::parse_file(tr_config);
      Model model = init_model(cfg.unet_config(), ControlConfig{}, TaskRegistry::standard(), cfg.seed);
      const Dataset data = load_dataset(tr_data);
      const NoiseSchedule schedule = cfg.schedule();
      const TrainResult result = train(model, data, schedule, cfg.train_config());
      fs::create_directories(tr_out);
      const std::string ckpt_path = (fs::path(tr_out) / "checkpoint.uckp").string();
      save_checkpoint(ckpt_path, result.checkpoint);
      std::ofstream log(fs::path(tr_out) / "loss.tsv");
      for (const auto& line : result.loss_lines) log << line << "\n";
      out << "trained " << cfg.steps << " steps; checkpoint at " << ckpt_path << "\n";
      if (!result.losses.empty()) {
        out << "final loss " << result.losses.back() << "\n";
      }
      return 0;
    }
    if (*sample_cmd) {
      LoadedModel lm = model_from_checkpoint(s_ckpt);
      const Tensor cond = load_condition_file(s_cond);
      const int k = lm.model.registry.index_of(s_task);
      GuidanceConfig g;
      g.weight = s_guidance;
      g.steps = s_steps;
      const Tensor feat = adapter_forward(lm.model, cond, k);
      const Tensor img = sample_with_adapter_features(
          lm.model, lm.schedule, g, feat,
          lm.model.instruction_embeddings[static_cast<std::size_t>(k)], s_prompt, s_seed);
      emit_sample(s_out, img, out);
      return 0;
    }
    if (*hybrid_cmd) {
      LoadedModel lm = model_from_checkpoint(h_ckpt);
      const HybridInputs hybrid = compose_hybrid(lm.model.registry, h_task_a,
                                                 load_condition_file(h_cond_a), h_task_b,
                                                 load_condition_file(h_cond_b), h_prompt);
      const Tensor fa = adapter_forward(lm.model, hybrid.cond_a, hybrid.task_a);
      const Tensor fb = adapter_forward(lm.model, hybrid.cond_b, hybrid.task_b);
      Tensor feat = Tensor::zeros(fa.shape());
      for (std::size_t i = 0; i < feat.values().size(); ++i) {
        feat.values_mut()[i] = 0.5f * (fa.values()[i] + fb.values()[i]);
      }
      GuidanceConfig g;
      g.weight = h_guidance;
      g.steps = h_steps;
      const Tensor img = sample_with_adapter_features(lm.model, lm.schedule, g, feat,
                                                      encode_text(hybrid.instruction),
                                                      hybrid.augmented_prompt, h_seed);
      out << "hybrid instruction: " << hybrid.instruction << "\n";
      emit_sample(h_out, img, out);
      return 0;
    }
    if (*zs_cmd) {
      if (z_weights.empty() == z_instruction.empty()) {
        err << "sample-zeroshot needs exactly one of --weights or --instruction\n";
        return 1;
      }
      LoadedModel lm = model_from_checkpoint(z_ckpt);
      const Tensor cond = load_condition_file(z_cond);
      std::vector<float> weights;
      Tensor instr_emb;
      if (!z_weights.empty()) {
        weights = estimate_task_weights_manual(lm.model.registry, parse_weights(z_weights));
        // Instruction embedding for the hypernet: weighted blend of the
        // component instructions, renormalized.
        instr_emb = Tensor::zeros({kTextEmbedDim});
        for (int k = 0; k < lm.model.num_tasks(); ++k) {
          const auto& e = lm.model.instruction_embeddings[static_cast<std::size_t>(k)];
          for (int i = 0; i < kTextEmbedDim; ++i) {
            instr_emb.values_mut()[static_cast<std::size_t>(i)] +=
                weights[static_cast<std::size_t>(k)] * e.values()[static_cast<std::size_t>(i)];
          }
        }
        double norm = 0.0;
        for (float v : instr_emb.values()) norm += static_cast<double>(v) * v;
        if (norm > 0.0) {
          const float inv = static_cast<float>(1.0 / std::sqrt(norm));
          for (auto& v : instr_emb.values_mut()) v *= inv;
        }
      } else {
        weights = estimate_task_weights_similarity(lm.model.registry, z_instruction);
        instr_emb = encode_text(z_instruction);
      }
      const Tensor feat = blend_adapters(lm.model, cond, weights);
      GuidanceConfig g;
      g.weight = z_guidance;
      g.steps = z_steps;
      const Tensor img = sample_with_adapter_features(lm.model, lm.schedule, g, feat, instr_emb,
                                                      z_prompt, z_seed);
      out << "task weights:";
      for (int k = 0; k < lm.model.num_tasks(); ++k) {
        if (weights[static_cast<std::size_t>(k)] > 0.0f) {
          out << " " << lm.model.registry.by_index(k).key << "="
              << weights[static_cast<std::size_t>(k)];
        }
      }
      out << "\n";
      emit_sample(z_out, img, out);
      return 0;
    }
    if (*eval_cmd) {
      LoadedModel lm = model_from_checkpoint(e_ckpt);
      load_dataset(e_data).task_records(e_task);  // validates the task has data
      GuidanceConfig g;
      g.weight = e_guidance;
      g.steps = e_steps;
      const FidelityReport report = eval_condition_fidelity(lm.model, lm.schedule, g, e_task, e_n,
                                                            e_seed, lm.config.datagen_config());
      out << report.render() << "\n";
      return 0;
    }
    if (*params_cmd) {
      const Config cfg = Config::parse_file(p_config);
      const Model model = init_model(cfg.unet_config(), ControlConfig{}, TaskRegistry::standard(),
                                     cfg.seed);
      out << count_params(model).render();
      return 0;
    }
    if (*gc_cmd) {
      bool ok = true;
      for (const auto& [name, report] : run_standard_gradchecks(gc_seed)) {
        const bool pass = report.all_below(1e-4);
        ok = ok && pass;
        out << (pass ? "[PASS] " : "[FAIL] ") << name << " worst=" << report.worst << "\n";
      }
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << "no subcommand\n";
  return 1;
}

}  // namespace uc::cli
