// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unicontrol/conditions.hpp"
#include "unicontrol/diffusion.hpp"
#include "unicontrol/schedule.hpp"
#include "unicontrol/trainer.hpp"
#include "unicontrol/unet.hpp"

namespace uc {

// Plain-text key=value configuration. Every key has a default; unknown keys
// are rejected.
struct Config {
  int image_size = 32;
  int base_channels = 32;
  std::vector<int> channel_mults{1, 2, 4};
  int T = 200;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  std::vector<std::string> tasks;  // default: all nine
  int steps = 2000;
  int batch_size = 8;
  double lr = 1e-4;
  double weight_decay = 0.01;
  double drop_prob = 0.30;
  double guidance_weight = 9.0;
  int ddim_steps = 50;
  std::uint64_t seed = 0;
  double freeze_frac = 0.80;
  double canny_low_min = 0.05;
  double canny_low_max = 0.20;
  double canny_high_min = 0.20;
  double canny_high_max = 0.50;

  Config();

  static Config parse_text(const std::string& text);
  static Config parse_file(const std::string& path);
  std::string to_text() const;
  // One "key=default  # comment" line per key.
  static std::string documented_defaults();

  UNetConfig unet_config() const;
  NoiseSchedule schedule() const;
  TrainConfig train_config() const;
  GuidanceConfig guidance() const;
  DatagenConfig datagen_config() const;
};

}  // namespace uc
