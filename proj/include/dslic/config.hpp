#pragma once

#include <fstream>
#include <map>
#include <string>

#include "dslic/error.hpp"
#include "dslic/pipeline.hpp"

// Flat key=value config files: one pair per line, '#' starts a comment,
// blank lines ignored. Unknown keys are errors.

namespace dslic {

inline std::map<std::string, std::string> parse_key_values(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t");
      return s.substr(b, e - b + 1);
    };
    if (strip(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError("config: missing '=' at " + path + ":" +
                    std::to_string(lineno));
    const std::string key = strip(line.substr(0, eq));
    const std::string val = strip(line.substr(eq + 1));
    if (key.empty())
      throw IoError("config: empty key at " + path + ":" +
                    std::to_string(lineno));
    kv[key] = val;
  }
  return kv;
}

namespace detail {

inline double cfg_double(const std::string& key, const std::string& val) {
  try {
    std::size_t used = 0;
    const double d = std::stod(val, &used);
    if (used != val.size()) throw std::invalid_argument(val);
    return d;
  } catch (const std::exception&) {
    throw InvalidArgument("config: bad numeric value for " + key + ": " + val);
  }
}

inline long long cfg_int(const std::string& key, const std::string& val) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(val, &used);
    if (used != val.size()) throw std::invalid_argument(val);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument("config: bad integer value for " + key + ": " + val);
  }
}

inline std::uint64_t cfg_u64(const std::string& key, const std::string& val) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(val, &used);
    if (used != val.size()) throw std::invalid_argument(val);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument("config: bad seed value for " + key + ": " + val);
  }
}

}  // namespace detail

// Applies config keys onto a TrainConfig. Every TrainConfig field has a key:
//   slic:      k, omega, slic_iters, slic_tol
//   loss:      alpha
//   optimizer: lr, epochs, batch
//   scheduler: sched_factor, sched_patience, sched_min_lr, sched_threshold
//   patch:     patch_h, patch_w
//   eot:       rot_deg, scale_lo, scale_hi, bright, contrast_lo, contrast_hi,
//              noise, samples, patch_scale, eot_seed
//   misc:      seed, victim_seed, warm_start (0/1)
inline void apply_config(TrainConfig& cfg,
                         const std::map<std::string, std::string>& kv) {
  using detail::cfg_double;
  using detail::cfg_int;
  using detail::cfg_u64;
  for (const auto& [key, val] : kv) {
    if (key == "k") cfg.slic.k = static_cast<int>(cfg_int(key, val));
    else if (key == "omega") cfg.slic.omega = cfg_double(key, val);
    else if (key == "slic_iters") cfg.slic.max_iters = static_cast<int>(cfg_int(key, val));
    else if (key == "slic_tol") cfg.slic.tol = cfg_double(key, val);
    else if (key == "alpha") cfg.alpha = cfg_double(key, val);
    else if (key == "lr") cfg.lr = cfg_double(key, val);
    else if (key == "epochs") cfg.epochs = static_cast<int>(cfg_int(key, val));
    else if (key == "batch") cfg.batch = static_cast<int>(cfg_int(key, val));
    else if (key == "sched_factor") cfg.scheduler.factor = cfg_double(key, val);
    else if (key == "sched_patience") cfg.scheduler.patience = static_cast<int>(cfg_int(key, val));
    else if (key == "sched_min_lr") cfg.scheduler.min_lr = cfg_double(key, val);
    else if (key == "sched_threshold") cfg.scheduler.threshold = cfg_double(key, val);
    else if (key == "patch_h") cfg.patch_h = static_cast<int>(cfg_int(key, val));
    else if (key == "patch_w") cfg.patch_w = static_cast<int>(cfg_int(key, val));
    else if (key == "rot_deg") cfg.eot.rot_deg = cfg_double(key, val);
    else if (key == "scale_lo") cfg.eot.scale_lo = cfg_double(key, val);
    else if (key == "scale_hi") cfg.eot.scale_hi = cfg_double(key, val);
    else if (key == "bright") cfg.eot.bright = cfg_double(key, val);
    else if (key == "contrast_lo") cfg.eot.contrast_lo = cfg_double(key, val);
    else if (key == "contrast_hi") cfg.eot.contrast_hi = cfg_double(key, val);
    else if (key == "noise") cfg.eot.noise = cfg_double(key, val);
    else if (key == "samples") cfg.eot.samples_per_scene = static_cast<int>(cfg_int(key, val));
    else if (key == "patch_scale") cfg.eot.patch_scale = cfg_double(key, val);
    else if (key == "eot_seed") cfg.eot.seed = cfg_u64(key, val);
    else if (key == "seed") cfg.seed = cfg_u64(key, val);
    else if (key == "victim_seed") cfg.victim_seed = cfg_u64(key, val);
    else if (key == "warm_start") cfg.warm_start = cfg_int(key, val) != 0;
    else throw InvalidArgument("config: unknown key: " + key);
  }
}

inline TrainConfig load_train_config(const std::string& path) {
  TrainConfig cfg;
  apply_config(cfg, parse_key_values(path));
  return cfg;
}

}  // namespace dslic
