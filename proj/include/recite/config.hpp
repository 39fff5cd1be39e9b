// Copyright 2026 recite-ctc contributors
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

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "recite/errors.hpp"
#include "recite/network.hpp"
#include "recite/rng.hpp"
#include "recite/spectrogram.hpp"

namespace recite {

/// Layered INI-style configuration: [features], [model], [train], [decode],
/// [data]. Every key exists with a default; files and flag overrides may only
/// touch known keys, so typos fail loudly. The canonical serialization (and
/// its hash) is embedded in every output artifact for provenance.
class Config {
 public:
  Config() : values_(defaults_map()) {}

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw BadConfig("cannot open config file: " + path);
    Config c;
    c.merge_stream(in, path);
    return c;
  }

  static Config parse(std::istream& in) {
    Config c;
    c.merge_stream(in, "<stream>");
    return c;
  }

  const std::string& get(const std::string& section, const std::string& key) const {
    auto s = values_.find(section);
    if (s == values_.end()) throw BadConfig("unknown config section [" + section + "]");
    auto k = s->second.find(key);
    if (k == s->second.end()) throw BadConfig("unknown config key " + section + "." + key);
    return k->second;
  }

  void set(const std::string& section, const std::string& key, const std::string& value) {
    auto s = values_.find(section);
    if (s == values_.end()) throw BadConfig("unknown config section [" + section + "]");
    if (s->second.find(key) == s->second.end()) {
      throw BadConfig("unknown config key " + section + "." + key);
    }
    s->second[key] = value;
  }

  int get_int(const std::string& section, const std::string& key) const {
    return static_cast<int>(get_i64(section, key));
  }

  std::int64_t get_i64(const std::string& section, const std::string& key) const {
    try {
      return std::stoll(get(section, key));
    } catch (const std::exception&) {
      throw BadConfig("config key " + section + "." + key + " is not an integer");
    }
  }

  std::uint64_t get_u64(const std::string& section, const std::string& key) const {
    try {
      return std::stoull(get(section, key));
    } catch (const std::exception&) {
      throw BadConfig("config key " + section + "." + key + " is not an unsigned integer");
    }
  }

  double get_double(const std::string& section, const std::string& key) const {
    try {
      return std::stod(get(section, key));
    } catch (const std::exception&) {
      throw BadConfig("config key " + section + "." + key + " is not a number");
    }
  }

  bool get_bool(const std::string& section, const std::string& key) const {
    const std::string& v = get(section, key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw BadConfig("config key " + section + "." + key + " is not a boolean");
  }

  /// Deterministic text form: sections and keys in sorted order.
  std::string canonical() const {
    std::ostringstream out;
    for (const auto& [section, keys] : values_) {
      out << '[' << section << "]\n";
      for (const auto& [key, value] : keys) out << key << " = " << value << '\n';
    }
    return out.str();
  }

  std::uint64_t hash() const { return fnv1a64(canonical()); }

  std::string hash_hex() const {
    std::ostringstream out;
    out << std::hex << hash();
    return out.str();
  }

  FeatureConfig features() const {
    FeatureConfig f;
    f.fft_size = get_int("features", "fft_size");
    f.hop_size = get_int("features", "hop_size");
    f.log_magnitude = get_bool("features", "log_magnitude");
    f.norm_epsilon = get_double("features", "norm_epsilon");
    if (f.fft_size <= 0 || f.hop_size <= 0 || f.hop_size > f.fft_size) {
      throw BadConfig("features: need 0 < hop_size <= fft_size");
    }
    return f;
  }

  /// Input bins follow from the feature settings: fft_size/2 + 1.
  ModelConfig model() const {
    ModelConfig m;
    m.input_bins = get_int("features", "fft_size") / 2 + 1;
    m.convs.clear();
    const int conv_layers = get_int("model", "conv_layers");
    for (int i = 0; i < conv_layers; ++i) {
      const std::string base = "conv" + std::to_string(i);
      ConvSpec spec;
      parse_pair(get("model", base + "_kernel"), spec.kernel_t, spec.kernel_f);
      parse_pair(get("model", base + "_stride"), spec.stride_t, spec.stride_f);
      spec.filters = get_int("model", base + "_filters");
      m.convs.push_back(spec);
    }
    m.num_gru_layers = get_int("model", "num_gru_layers");
    m.gru_units = get_int("model", "gru_units");
    m.dense_units = get_int("model", "dense_units");
    m.dropout_rate = get_double("model", "dropout_rate");
    m.sum_directions = get_bool("model", "sum_directions");
    m.dense_relu = get_bool("model", "dense_relu");
    m.bn_epsilon = get_double("model", "bn_epsilon");
    m.bn_momentum = get_double("model", "bn_momentum");
    m.num_classes = kNumClasses;
    m.validate();
    return m;
  }

 private:
  using Section = std::map<std::string, std::string>;
  using Values = std::map<std::string, Section>;

  static void parse_pair(const std::string& v, int& a, int& b) {
    const auto x = v.find('x');
    if (x == std::string::npos) throw BadConfig("expected AxB pair, got \"" + v + "\"");
    try {
      a = std::stoi(v.substr(0, x));
      b = std::stoi(v.substr(x + 1));
    } catch (const std::exception&) {
      throw BadConfig("expected AxB pair, got \"" + v + "\"");
    }
  }

  static Values defaults_map() {
    Values v;
    v["features"] = {{"fft_size", "800"},
                     {"hop_size", "400"},
                     {"log_magnitude", "false"},
                     {"norm_epsilon", "1e-8"}};
    // conv2/conv3 slots exist so smaller or deeper stacks stay expressible
    v["model"] = {{"conv_layers", "2"},
                  {"conv0_kernel", "11x41"},
                  {"conv0_stride", "2x2"},
                  {"conv0_filters", "32"},
                  {"conv1_kernel", "11x21"},
                  {"conv1_stride", "1x2"},
                  {"conv1_filters", "32"},
                  {"conv2_kernel", "3x3"},
                  {"conv2_stride", "1x1"},
                  {"conv2_filters", "32"},
                  {"conv3_kernel", "3x3"},
                  {"conv3_stride", "1x1"},
                  {"conv3_filters", "32"},
                  {"num_gru_layers", "5"},
                  {"gru_units", "512"},
                  {"dense_units", "1024"},
                  {"dropout_rate", "0.5"},
                  {"sum_directions", "true"},
                  {"dense_relu", "true"},
                  {"bn_epsilon", "1e-5"},
                  {"bn_momentum", "0.9"}};
    v["train"] = {{"epochs", "20"},
                  {"batch_size", "8"},
                  {"lr", "1e-4"},
                  {"beta1", "0.9"},
                  {"beta2", "0.999"},
                  {"adam_epsilon", "1e-8"},
                  {"grad_clip", "0"},
                  {"loss_reduction", "mean"},
                  {"sort_by_duration", "true"},
                  {"seed", "42"}};
    v["decode"] = {{"beam_width", "100"},
                   {"greedy", "false"},
                   {"prune_threshold", "1e-6"},
                   {"top_k", "1"}};
    v["data"] = {{"alphabet", "data/alphabet.txt"}};
    return v;
  }

  void merge_stream(std::istream& in, const std::string& origin) {
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos) continue;
      const auto last = line.find_last_not_of(" \t");
      std::string trimmed = line.substr(first, last - first + 1);
      if (trimmed[0] == '#' || trimmed[0] == ';') continue;
      if (trimmed.front() == '[') {
        if (trimmed.back() != ']') {
          throw BadConfig(origin + ":" + std::to_string(lineno) + ": malformed section header");
        }
        section = trimmed.substr(1, trimmed.size() - 2);
        if (values_.find(section) == values_.end()) {
          throw BadConfig(origin + ":" + std::to_string(lineno) + ": unknown section [" + section + "]");
        }
        continue;
      }
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos) {
        throw BadConfig(origin + ":" + std::to_string(lineno) + ": expected key = value");
      }
      std::string key = trimmed.substr(0, eq);
      std::string value = trimmed.substr(eq + 1);
      const auto kl = key.find_last_not_of(" \t");
      key = key.substr(0, kl == std::string::npos ? 0 : kl + 1);
      const auto vf = value.find_first_not_of(" \t");
      value = vf == std::string::npos ? "" : value.substr(vf);
      if (section.empty()) {
        throw BadConfig(origin + ":" + std::to_string(lineno) + ": key outside any section");
      }
      set(section, key, value);
    }
  }

  Values values_;
};

}  // namespace recite
