// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#include "densecl/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "densecl/common.hpp"
#include "densecl/matcher.hpp"

namespace densecl::config {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v, double lo, double hi) {
  double d;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
  DCL_CHECK(ec == std::errc() && p == v.data() + v.size(), ConfigError,
            key + ": '" + v + "' is not a number");
  std::ostringstream rng;
  rng << "[" << lo << "," << hi << "]";
  DCL_CHECK(d >= lo && d <= hi, ConfigError,
            key + ": value " + v + " out of range " + rng.str());
  return d;
}

int64_t to_int(const std::string& key, const std::string& v, int64_t lo, int64_t hi) {
  int64_t d;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
  DCL_CHECK(ec == std::errc() && p == v.data() + v.size(), ConfigError,
            key + ": '" + v + "' is not an integer");
  DCL_CHECK(d >= lo && d <= hi, ConfigError,
            key + ": value " + v + " out of range [" + std::to_string(lo) + "," +
                std::to_string(hi) + "]");
  return d;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean (true|false)");
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

template <typename T>
std::string num_str(T v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

struct Field {
  std::string key;
  std::function<void(FullConfig&, const std::string&)> set;
  std::function<std::string(const FullConfig&)> get;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      {"data.dir", [](FullConfig& c, const std::string& v) { c.data_dir = v; },
       [](const FullConfig& c) { return c.data_dir; }},
      {"synth.n_images",
       [](FullConfig& c, const std::string& v) {
         c.synth.n_images = static_cast<int>(to_int("synth.n_images", v, 1, 1000000));
       },
       [](const FullConfig& c) { return num_str(c.synth.n_images); }},
      {"synth.image_size",
       [](FullConfig& c, const std::string& v) {
         c.synth.image_size = static_cast<int>(to_int("synth.image_size", v, 8, 4096));
       },
       [](const FullConfig& c) { return num_str(c.synth.image_size); }},
      {"synth.n_classes",
       [](FullConfig& c, const std::string& v) {
         c.synth.n_classes = static_cast<int>(to_int("synth.n_classes", v, 1, 64));
       },
       [](const FullConfig& c) { return num_str(c.synth.n_classes); }},
      {"synth.seed",
       [](FullConfig& c, const std::string& v) {
         c.synth.seed = static_cast<uint64_t>(to_int("synth.seed", v, 1, INT64_MAX));
       },
       [](const FullConfig& c) { return num_str(c.synth.seed); }},

      {"augment.out_size",
       [](FullConfig& c, const std::string& v) {
         c.train.augment.out_size = static_cast<int>(to_int("augment.out_size", v, 8, 4096));
       },
       [](const FullConfig& c) { return num_str(c.train.augment.out_size); }},
      {"augment.scale_min",
       [](FullConfig& c, const std::string& v) {
         c.train.augment.scale_min = to_double("augment.scale_min", v, 1e-6, 1.0);
       },
       [](const FullConfig& c) { return num_str(c.train.augment.scale_min); }},
      {"augment.scale_max",
       [](FullConfig& c, const std::string& v) {
         c.train.augment.scale_max = to_double("augment.scale_max", v, 1e-6, 1.0);
       },
       [](const FullConfig& c) { return num_str(c.train.augment.scale_max); }},
      {"augment.flip_prob",
       [](FullConfig& c, const std::string& v) {
         c.train.augment.flip_prob = to_double("augment.flip_prob", v, 0.0, 1.0);
       },
       [](const FullConfig& c) { return num_str(c.train.augment.flip_prob); }},
      {"augment.jitter_prob",
       [](FullConfig& c, const std::string& v) {
         c.train.augment.jitter_prob = to_double("augment.jitter_prob", v, 0.0, 1.0);
       },
       [](const FullConfig& c) { return num_str(c.train.augment.jitter_prob); }},
      {"augment.jitter_min",
       [](FullConfig& c, const std::string& v) {
         c.train.augment.jitter_min = to_double("augment.jitter_min", v, 0.0, 4.0);
       },
       [](const FullConfig& c) { return num_str(c.train.augment.jitter_min); }},
      {"augment.jitter_max",
       [](FullConfig& c, const std::string& v) {
         c.train.augment.jitter_max = to_double("augment.jitter_max", v, 0.0, 4.0);
       },
       [](const FullConfig& c) { return num_str(c.train.augment.jitter_max); }},
      {"augment.grayscale_prob",
       [](FullConfig& c, const std::string& v) {
         c.train.augment.grayscale_prob = to_double("augment.grayscale_prob", v, 0.0, 1.0);
       },
       [](const FullConfig& c) { return num_str(c.train.augment.grayscale_prob); }},
      {"augment.blur_prob",
       [](FullConfig& c, const std::string& v) {
         c.train.augment.blur_prob = to_double("augment.blur_prob", v, 0.0, 1.0);
       },
       [](const FullConfig& c) { return num_str(c.train.augment.blur_prob); }},
      {"augment.blur_sigma_min",
       [](FullConfig& c, const std::string& v) {
         c.train.augment.blur_sigma_min = to_double("augment.blur_sigma_min", v, 0.01, 16.0);
       },
       [](const FullConfig& c) { return num_str(c.train.augment.blur_sigma_min); }},
      {"augment.blur_sigma_max",
       [](FullConfig& c, const std::string& v) {
         c.train.augment.blur_sigma_max = to_double("augment.blur_sigma_max", v, 0.01, 16.0);
       },
       [](const FullConfig& c) { return num_str(c.train.augment.blur_sigma_max); }},

      {"model.channels",
       [](FullConfig& c, const std::string& v) {
         std::vector<int> ch;
         std::stringstream ss(v);
         std::string tok;
         while (std::getline(ss, tok, ','))
           ch.push_back(static_cast<int>(to_int("model.channels", trim(tok), 1, 4096)));
         DCL_CHECK(!ch.empty(), ConfigError, "model.channels: empty list");
         c.train.encoder.backbone.channels = ch;
       },
       [](const FullConfig& c) {
         std::string s;
         for (size_t i = 0; i < c.train.encoder.backbone.channels.size(); ++i)
           s += (i ? "," : "") + num_str(c.train.encoder.backbone.channels[i]);
         return s;
       }},
      {"model.batchnorm",
       [](FullConfig& c, const std::string& v) {
         c.train.encoder.backbone.batchnorm = to_bool("model.batchnorm", v);
       },
       [](const FullConfig& c) { return bool_str(c.train.encoder.backbone.batchnorm); }},
      {"model.hidden_dim",
       [](FullConfig& c, const std::string& v) {
         c.train.encoder.hidden_dim = static_cast<int>(to_int("model.hidden_dim", v, 1, 65536));
       },
       [](const FullConfig& c) { return num_str(c.train.encoder.hidden_dim); }},
      {"model.embed_dim",
       [](FullConfig& c, const std::string& v) {
         c.train.encoder.embed_dim = static_cast<int>(to_int("model.embed_dim", v, 1, 65536));
       },
       [](const FullConfig& c) { return num_str(c.train.encoder.embed_dim); }},
      {"model.grid_size",
       [](FullConfig& c, const std::string& v) {
         c.train.encoder.grid_size = static_cast<int>(to_int("model.grid_size", v, 1, 256));
       },
       [](const FullConfig& c) { return num_str(c.train.encoder.grid_size); }},

      {"loss.temperature",
       [](FullConfig& c, const std::string& v) {
         c.train.loss.temperature = to_double("loss.temperature", v, 1e-6, 100.0);
       },
       [](const FullConfig& c) { return num_str(c.train.loss.temperature); }},
      {"loss.lambda",
       [](FullConfig& c, const std::string& v) {
         c.train.loss.lambda = to_double("loss.lambda", v, 0.0, 1.0);
       },
       [](const FullConfig& c) { return num_str(c.train.loss.lambda); }},
      {"loss.warmup_iters",
       [](FullConfig& c, const std::string& v) {
         c.train.loss.warmup_iters = to_int("loss.warmup_iters", v, 0, INT64_MAX);
       },
       [](const FullConfig& c) { return num_str(c.train.loss.warmup_iters); }},
      {"loss.warmup_lambda",
       [](FullConfig& c, const std::string& v) {
         c.train.loss.warmup_lambda = to_double("loss.warmup_lambda", v, 0.0, 1.0);
       },
       [](const FullConfig& c) { return num_str(c.train.loss.warmup_lambda); }},
      {"loss.literal_denominator",
       [](FullConfig& c, const std::string& v) {
         c.train.loss.literal_denominator = to_bool("loss.literal_denominator", v);
       },
       [](const FullConfig& c) { return bool_str(c.train.loss.literal_denominator); }},

      {"match.strategy",
       [](FullConfig& c, const std::string& v) { c.train.match = matcher::parse_strategy(v); },
       [](const FullConfig& c) { return matcher::strategy_name(c.train.match); }},

      {"dict.global_capacity",
       [](FullConfig& c, const std::string& v) {
         c.train.global_queue_capacity = to_int("dict.global_capacity", v, 1, INT64_MAX);
       },
       [](const FullConfig& c) { return num_str(c.train.global_queue_capacity); }},
      {"dict.dense_capacity",
       [](FullConfig& c, const std::string& v) {
         c.train.dense_queue_capacity = to_int("dict.dense_capacity", v, 1, INT64_MAX);
       },
       [](const FullConfig& c) { return num_str(c.train.dense_queue_capacity); }},
      {"dict.momentum",
       [](FullConfig& c, const std::string& v) {
         c.train.momentum_m = to_double("dict.momentum", v, 0.0, 1.0);
       },
       [](const FullConfig& c) { return num_str(c.train.momentum_m); }},
      {"dict.negative_mode",
       [](FullConfig& c, const std::string& v) {
         c.train.negative_mode = trainer::parse_negative_mode(v);
       },
       [](const FullConfig& c) { return trainer::negative_mode_name(c.train.negative_mode); }},
      {"dict.save_queues",
       [](FullConfig& c, const std::string& v) {
         c.train.save_queues = to_bool("dict.save_queues", v);
       },
       [](const FullConfig& c) { return bool_str(c.train.save_queues); }},

      {"train.base_lr",
       [](FullConfig& c, const std::string& v) {
         c.train.base_lr = to_double("train.base_lr", v, 1e-9, 100.0);
       },
       [](const FullConfig& c) { return num_str(c.train.base_lr); }},
      {"train.sgd_momentum",
       [](FullConfig& c, const std::string& v) {
         c.train.sgd_momentum = to_double("train.sgd_momentum", v, 0.0, 0.999999);
       },
       [](const FullConfig& c) { return num_str(c.train.sgd_momentum); }},
      {"train.weight_decay",
       [](FullConfig& c, const std::string& v) {
         c.train.weight_decay = to_double("train.weight_decay", v, 0.0, 1.0);
       },
       [](const FullConfig& c) { return num_str(c.train.weight_decay); }},
      {"train.batch_size",
       [](FullConfig& c, const std::string& v) {
         c.train.batch_size = static_cast<int>(to_int("train.batch_size", v, 1, 65536));
       },
       [](const FullConfig& c) { return num_str(c.train.batch_size); }},
      {"train.epochs",
       [](FullConfig& c, const std::string& v) {
         c.train.epochs = static_cast<int>(to_int("train.epochs", v, 1, 1000000));
       },
       [](const FullConfig& c) { return num_str(c.train.epochs); }},
      {"train.seed",
       [](FullConfig& c, const std::string& v) {
         c.train.seed = static_cast<uint64_t>(to_int("train.seed", v, 0, INT64_MAX));
       },
       [](const FullConfig& c) { return num_str(c.train.seed); }},
      {"train.checkpoint_every",
       [](FullConfig& c, const std::string& v) {
         c.train.checkpoint_every = static_cast<int>(to_int("train.checkpoint_every", v, 0, 1000000));
       },
       [](const FullConfig& c) { return num_str(c.train.checkpoint_every); }},
      {"train.dense_pathway",
       [](FullConfig& c, const std::string& v) {
         c.train.dense_pathway = to_bool("train.dense_pathway", v);
       },
       [](const FullConfig& c) { return bool_str(c.train.dense_pathway); }},
      {"train.symmetrize",
       [](FullConfig& c, const std::string& v) {
         c.train.symmetrize = to_bool("train.symmetrize", v);
       },
       [](const FullConfig& c) { return bool_str(c.train.symmetrize); }},
      {"train.threads",
       [](FullConfig& c, const std::string& v) {
         c.threads = static_cast<int>(to_int("train.threads", v, 0, 1024));
       },
       [](const FullConfig& c) { return num_str(c.threads); }},

      {"eval.n_pairs",
       [](FullConfig& c, const std::string& v) {
         c.eval_n_pairs = static_cast<int>(to_int("eval.n_pairs", v, 1, 1000000));
       },
       [](const FullConfig& c) { return num_str(c.eval_n_pairs); }},
      {"eval.knn_k",
       [](FullConfig& c, const std::string& v) {
         c.eval_knn_k = static_cast<int>(to_int("eval.knn_k", v, 1, 65536));
       },
       [](const FullConfig& c) { return num_str(c.eval_knn_k); }},
      {"eval.seed",
       [](FullConfig& c, const std::string& v) {
         c.eval_seed = static_cast<uint64_t>(to_int("eval.seed", v, 0, INT64_MAX));
       },
       [](const FullConfig& c) { return num_str(c.eval_seed); }},
      {"eval.photometric",
       [](FullConfig& c, const std::string& v) {
         c.eval_photometric = to_bool("eval.photometric", v);
       },
       [](const FullConfig& c) { return bool_str(c.eval_photometric); }},
      {"eval.threshold",
       [](FullConfig& c, const std::string& v) {
         c.vis_threshold = to_double("eval.threshold", v, -1.0, 2.0);
       },
       [](const FullConfig& c) { return num_str(c.vis_threshold); }},
  };
  return f;
}

void apply_kv(FullConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_line(FullConfig& cfg, const std::string& raw, const std::string& where) {
  std::string line = raw;
  auto hash = line.find('#');
  if (hash != std::string::npos) line = line.substr(0, hash);
  line = trim(line);
  if (line.empty()) return;
  auto eq = line.find('=');
  DCL_CHECK(eq != std::string::npos, ConfigError,
            where + ": expected 'key = value', got '" + trim(raw) + "'");
  apply_kv(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
}

}  // namespace

FullConfig parse_config(const std::string& path, const std::vector<std::string>& overrides) {
  FullConfig cfg;
  if (!path.empty()) {
    std::ifstream f(path);
    DCL_CHECK(f.good(), IoError, "cannot open config file '" + path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(f, line))
      apply_line(cfg, line, path + ":" + std::to_string(++lineno));
  }
  for (const auto& ov : overrides) apply_line(cfg, ov, "override");
  validate(cfg);
  return cfg;
}

void validate(const FullConfig& cfg) {
  cfg.train.validate();
  cfg.synth.validate();
  DCL_CHECK(cfg.train.augment.scale_min <= cfg.train.augment.scale_max, ConfigError,
            "augment.scale_min must not exceed augment.scale_max");
  DCL_CHECK(cfg.train.augment.jitter_min <= cfg.train.augment.jitter_max, ConfigError,
            "augment.jitter_min must not exceed augment.jitter_max");
  DCL_CHECK(cfg.train.augment.blur_sigma_min <= cfg.train.augment.blur_sigma_max, ConfigError,
            "augment.blur_sigma_min must not exceed augment.blur_sigma_max");
}

std::string dump_config(const FullConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace densecl::config
