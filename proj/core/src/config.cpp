// SPDX-License-Identifier: Apache-2.0
#include "unicontrol/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "unicontrol/tasks.hpp"

namespace uc {
namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join_csv(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += v[i];
  }
  return out;
}

}  // namespace

Config::Config() {
  const TaskRegistry reg = TaskRegistry::standard();
  for (const auto& spec : reg.specs()) tasks.push_back(spec.key);
}

Config Config::parse_text(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "image_size") c.image_size = std::stoi(value);
      else if (key == "base_channels") c.base_channels = std::stoi(value);
      else if (key == "channel_mults") {
        c.channel_mults.clear();
        for (const auto& m : split_csv(value)) c.channel_mults.push_back(std::stoi(m));
      } else if (key == "T") c.T = std::stoi(value);
      else if (key == "beta_min") c.beta_min = std::stod(value);
      else if (key == "beta_max") c.beta_max = std::stod(value);
      else if (key == "tasks") c.tasks = split_csv(value);
      else if (key == "steps") c.steps = std::stoi(value);
      else if (key == "batch_size") c.batch_size = std::stoi(value);
      else if (key == "lr") c.lr = std::stod(value);
      else if (key == "weight_decay") c.weight_decay = std::stod(value);
      else if (key == "drop_prob") c.drop_prob = std::stod(value);
      else if (key == "guidance_weight") c.guidance_weight = std::stod(value);
      else if (key == "ddim_steps") c.ddim_steps = std::stoi(value);
      else if (key == "seed") c.seed = std::stoull(value);
      else if (key == "freeze_frac") c.freeze_frac = std::stod(value);
      else if (key == "canny_low_min") c.canny_low_min = std::stod(value);
      else if (key == "canny_low_max") c.canny_low_max = std::stod(value);
      else if (key == "canny_high_min") c.canny_high_min = std::stod(value);
      else if (key == "canny_high_max") c.canny_high_max = std::stod(value);
      else throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key \"" + key + "\"");
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception&) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": bad value for \"" +
                                  key + "\": " + value);
    }
  }
  return c;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str());
}

std::string Config::to_text() const {
  std::ostringstream out;
  out << "image_size=" << image_size << "\n";
  out << "base_channels=" << base_channels << "\n";
  out << "channel_mults=";
  for (std::size_t i = 0; i < channel_mults.size(); ++i) {
    if (i) out << ",";
    out << channel_mults[i];
  }
  out << "\n";
  out << "T=" << T << "\n";
  out << "beta_min=" << beta_min << "\n";
  out << "beta_max=" << beta_max << "\n";
  out << "tasks=" << join_csv(tasks) << "\n";
  out << "steps=" << steps << "\n";
  out << "batch_size=" << batch_size << "\n";
  out << "lr=" << lr << "\n";
  out << "weight_decay=" << weight_decay << "\n";
  out << "drop_prob=" << drop_prob << "\n";
  out << "guidance_weight=" << guidance_weight << "\n";
  out << "ddim_steps=" << ddim_steps << "\n";
  out << "seed=" << seed << "\n";
  out << "freeze_frac=" << freeze_frac << "\n";
  out << "canny_low_min=" << canny_low_min << "\n";
  out << "canny_low_max=" << canny_low_max << "\n";
  out << "canny_high_min=" << canny_high_min << "\n";
  out << "canny_high_max=" << canny_high_max << "\n";
  return out.str();
}

std::string Config::documented_defaults() {
  return
      "image_size=32        # canvas and training resolution\n"
      "base_channels=32     # U-Net width\n"
      "channel_mults=1,2,4  # per-level channel multipliers\n"
      "T=200                # diffusion steps\n"
      "beta_min=0.0001      # linear beta schedule start\n"
      "beta_max=0.02        # linear beta schedule end\n"
      "tasks=hed,canny,seg,depth,normal,pose,hedsketch,bbox,outpainting\n"
      "steps=2000           # training steps\n"
      "batch_size=8\n"
      "lr=0.0001            # toy-scale AdamW learning rate (paper scale: 1e-5)\n"
      "weight_decay=0.01\n"
      "drop_prob=0.3        # text prompt drop probability\n"
      "guidance_weight=9    # classifier-free guidance weight\n"
      "ddim_steps=50\n"
      "seed=0\n"
      "freeze_frac=0.8      # hypernet freeze point as a fraction of steps\n"
      "canny_low_min=0.05\n"
      "canny_low_max=0.2\n"
      "canny_high_min=0.2\n"
      "canny_high_max=0.5\n";
}

UNetConfig Config::unet_config() const {
  UNetConfig u;
  u.image_size = image_size;
  u.base_channels = base_channels;
  u.channel_mults = channel_mults;
  const UNetConfig defaults;
  u.in_channels = defaults.in_channels;
  u.time_embed_dim = defaults.time_embed_dim;
  u.text_embed_dim = defaults.text_embed_dim;
  u.blocks_per_level = defaults.blocks_per_level;
  return u;
}

NoiseSchedule Config::schedule() const { return make_schedule(T, beta_min, beta_max); }

TrainConfig Config::train_config() const {
  TrainConfig t;
  t.tasks = tasks;
  t.steps = steps;
  t.batch_size = batch_size;
  t.lr = static_cast<float>(lr);
  t.weight_decay = static_cast<float>(weight_decay);
  t.drop_prob = drop_prob;
  t.freeze_frac = freeze_frac;
  t.seed = seed;
  t.config_snapshot = to_text();
  return t;
}

GuidanceConfig Config::guidance() const {
  GuidanceConfig g;
  g.weight = guidance_weight;
  g.steps = ddim_steps;
  g.prompt_drop_prob = drop_prob;
  return g;
}

DatagenConfig Config::datagen_config() const {
  DatagenConfig d;
  d.canvas = image_size;
  d.canny.low_min = canny_low_min;
  d.canny.low_max = canny_low_max;
  d.canny.high_min = canny_high_min;
  d.canny.high_max = canny_high_max;
  return d;
}

}  // namespace uc
