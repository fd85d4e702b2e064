// Copyright 2026 The DVPT Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dvpt/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <functional>
#include <map>
#include <set>

#include "binary_io.hpp"
#include "dvpt/errors.hpp"

namespace dvpt {

namespace {

using Setter = std::function<void(const std::string& key, std::string_view value)>;
using SectionTable = std::map<std::string, Setter, std::less<>>;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError(key + ": '" + std::string(text) + "' is not a valid number");
  }
  return value;
}

Setter size_field(std::size_t& field) {
  return [&field](const std::string& key, std::string_view v) { field = parse_number<std::size_t>(key, v); };
}

Setter u64_field(std::uint64_t& field) {
  return [&field](const std::string& key, std::string_view v) { field = parse_number<std::uint64_t>(key, v); };
}

Setter real_field(double& field) {
  return [&field](const std::string& key, std::string_view v) { field = parse_number<double>(key, v); };
}

Setter text_field(std::string& field) {
  return [&field](const std::string&, std::string_view v) { field = std::string(v); };
}

Setter family_field(SynthFamily& field) {
  return [&field](const std::string&, std::string_view v) { field = parse_synth_family(v); };
}

std::map<std::string, SectionTable, std::less<>> build_tables(RunConfig& c) {
  std::map<std::string, SectionTable, std::less<>> t;
  VitConfig& v = c.model.vit;
  t["model"] = {
      {"image_h", size_field(v.image_h)},
      {"image_w", size_field(v.image_w)},
      {"channels", size_field(v.channels)},
      {"patch_size", size_field(v.patch_size)},
      {"embed_dim", size_field(v.embed_dim)},
      {"depth", size_field(v.depth)},
      {"heads", size_field(v.heads)},
      {"num_classes", size_field(v.num_classes)},
      {"task", [&c](const std::string&, std::string_view s) { c.model.task = parse_task(s); }},
      {"dtype",
       [&c](const std::string& key, std::string_view s) {
         if (s == "float32") {
           c.model.dtype = DType::kFloat32;
         } else if (s == "float64") {
           c.model.dtype = DType::kFloat64;
         } else {
           throw ConfigError(key + ": expected float32 or float64, got '" + std::string(s) + "'");
         }
       }},
  };
  DvptConfig& d = c.model.dvpt;
  t["dvpt"] = {
      {"num_prompts", size_field(d.num_prompts)},
      {"hidden_dim", size_field(d.hidden_dim)},
      {"share_every", size_field(d.share_every)},
      {"gate_init", real_field(d.gate_init)},
  };
  OptimConfig& o = c.optim;
  t["train"] = {
      {"policy", [&c](const std::string&, std::string_view s) { c.policy = parse_freeze_mode(s); }},
      {"lr", real_field(o.lr)},
      {"epochs", size_field(o.epochs)},
      {"batch_size", size_field(o.batch_size)},
      {"seed", u64_field(o.seed)},
      {"max_steps", size_field(o.max_steps)},
  };
  t["data"] = {
      {"path", text_field(c.train_data.path)},
      {"synthetic", family_field(c.train_data.family)},
      {"count", size_field(c.train_data.count)},
      {"difficulty", real_field(c.train_data.difficulty)},
      {"seed", u64_field(c.train_data.seed)},
      {"eval_path", text_field(c.eval_data.path)},
      {"eval_synthetic", family_field(c.eval_data.family)},
      {"eval_count", size_field(c.eval_data.count)},
      {"eval_difficulty", real_field(c.eval_data.difficulty)},
      {"eval_seed", u64_field(c.eval_data.seed)},
  };
  PretrainConfig& p = c.pretrain;
  t["pretrain"] = {
      {"path", text_field(p.data.path)},
      {"synthetic", family_field(p.data.family)},
      {"count", size_field(p.data.count)},
      {"difficulty", real_field(p.data.difficulty)},
      {"seed", u64_field(p.data.seed)},
      {"lr", real_field(p.lr)},
      {"epochs", size_field(p.epochs)},
  };
  return t;
}

void validate_source(const DataSource& s, const char* section, Task task) {
  if (s.path.empty()) {
    if (s.count == 0) throw ConfigError(std::string(section) + ".count must be positive");
    const bool seg = s.family == SynthFamily::kDisks;
    if (seg != (task == Task::kSegmentation)) {
      throw ConfigError(std::string(section) + ".synthetic family '" + std::string(synth_family_name(s.family)) +
                        "' does not match model.task");
    }
  }
  if (!(s.difficulty >= 0.0 && s.difficulty <= 1.0)) {
    throw ConfigError(std::string(section) + ".difficulty must lie in [0, 1]");
  }
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (optim.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(optim.lr >= 0.0)) throw ConfigError("train.lr must be non-negative");
  if (!(pretrain.lr >= 0.0)) throw ConfigError("pretrain.lr must be non-negative");
  validate_source(train_data, "data", model.task);
  validate_source(eval_data, "data.eval", model.task);
  // Pretraining always fits a classification head on the plain backbone.
  validate_source(pretrain.data, "pretrain", Task::kClassification);
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  auto tables = build_tables(cfg);
  std::set<std::string> seen;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!tables.contains(section)) throw ConfigError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(where + ": key '" + key + "' outside of any section");
    const std::string qualified = section + "." + key;
    const auto& table = tables.at(section);
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError(where + ": unknown key " + qualified);
    if (!seen.insert(qualified).second) throw ConfigError(where + ": duplicate key " + qualified);
    it->second(qualified, value);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = detail::read_file(path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return parse_run_config(text);
}

std::string format_run_config(const RunConfig& c) {
  const VitConfig& v = c.model.vit;
  const DvptConfig& d = c.model.dvpt;
  std::string out;
  out += "[model]\n";
  out += fmt::format("image_h = {}\nimage_w = {}\nchannels = {}\npatch_size = {}\n", v.image_h, v.image_w, v.channels,
                     v.patch_size);
  out += fmt::format("embed_dim = {}\ndepth = {}\nheads = {}\nnum_classes = {}\n", v.embed_dim, v.depth, v.heads,
                     v.num_classes);
  out += fmt::format("task = {}\ndtype = {}\n", task_name(c.model.task), dtype_name(c.model.dtype));
  out += "\n[dvpt]\n";
  out += fmt::format("num_prompts = {}\nhidden_dim = {}\nshare_every = {}\ngate_init = {}\n", d.num_prompts,
                     d.hidden_dim, d.share_every, d.gate_init);
  out += "\n[train]\n";
  out += fmt::format("policy = {}\nlr = {}\nepochs = {}\nbatch_size = {}\nseed = {}\nmax_steps = {}\n",
                     freeze_mode_name(c.policy), c.optim.lr, c.optim.epochs, c.optim.batch_size, c.optim.seed,
                     c.optim.max_steps);
  out += "\n[data]\n";
  if (!c.train_data.path.empty()) out += fmt::format("path = {}\n", c.train_data.path);
  out += fmt::format("synthetic = {}\ncount = {}\ndifficulty = {}\nseed = {}\n", synth_family_name(c.train_data.family),
                     c.train_data.count, c.train_data.difficulty, c.train_data.seed);
  if (!c.eval_data.path.empty()) out += fmt::format("eval_path = {}\n", c.eval_data.path);
  out += fmt::format("eval_synthetic = {}\neval_count = {}\neval_difficulty = {}\neval_seed = {}\n",
                     synth_family_name(c.eval_data.family), c.eval_data.count, c.eval_data.difficulty,
                     c.eval_data.seed);
  out += "\n[pretrain]\n";
  if (!c.pretrain.data.path.empty()) out += fmt::format("path = {}\n", c.pretrain.data.path);
  out += fmt::format("synthetic = {}\ncount = {}\ndifficulty = {}\nseed = {}\nlr = {}\nepochs = {}\n",
                     synth_family_name(c.pretrain.data.family), c.pretrain.data.count, c.pretrain.data.difficulty,
                     c.pretrain.data.seed, c.pretrain.lr, c.pretrain.epochs);
  return out;
}

Dataset load_data(const DataSource& source, const ModelConfig& model) {
  if (!source.path.empty()) {
    Dataset ds = load_dataset(source.path);
    if (ds.task != model.task) throw ConfigError("dataset " + source.path + " does not match model.task");
    return ds;
  }
  SynthSpec spec;
  spec.family = source.family;
  spec.count = source.count;
  spec.seed = source.seed;
  spec.difficulty = source.difficulty;
  spec.height = model.vit.image_h;
  spec.width = model.vit.image_w;
  spec.channels = model.vit.channels;
  spec.num_classes = model.vit.num_classes;
  return synth_generate(spec);
}

}  // namespace dvpt
