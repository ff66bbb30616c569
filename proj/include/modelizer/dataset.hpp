#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "modelizer/converter.hpp"
#include "modelizer/errors.hpp"
#include "modelizer/generator.hpp"
#include "modelizer/subprocess.hpp"

namespace modelizer {

struct SampleRecord {
  std::string input;
  std::string output;
  std::string hash;
  std::size_t min_expansions = 0;
  std::size_t max_expansions = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

inline std::string record_to_json(const SampleRecord& r) {
  nlohmann::ordered_json j;
  j["input"] = r.input;
  j["output"] = r.output;
  j["hash"] = r.hash;
  j["bounds"] = {r.min_expansions, r.max_expansions};
  j["seed"] = r.seed;
  return j.dump();
}

inline SampleRecord record_from_json(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    SampleRecord r;
    r.input = j.at("input").get<std::string>();
    r.output = j.value("output", std::string());
    r.hash = j.value("hash", std::string());
    if (j.contains("bounds")) {
      r.min_expansions = j["bounds"].at(0).get<std::size_t>();
      r.max_expansions = j["bounds"].at(1).get<std::size_t>();
    }
    r.seed = j.value("seed", std::uint64_t{0});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed dataset record: ") + e.what());
  }
}

inline void write_records(const std::string& path, const std::vector<SampleRecord>& records) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    for (const auto& r : records) out << record_to_json(r) << '\n';
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error("cannot replace " + path);
}

inline std::vector<SampleRecord> read_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read dataset " + path);
  std::vector<SampleRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(record_from_json(line));
  }
  return out;
}

// The program under test: maps an input to its output or throws PutFailure /
// PutTimeout.
using Put = std::function<std::string(const std::string&)>;

inline Put builtin_put() {
  return [](const std::string& in) {
    try {
      return builtin_convert(in);
    } catch (const ConversionError& e) {
      throw PutFailure(1, e.what());
    }
  };
}

inline Put subprocess_put(std::vector<std::string> command, double timeout_seconds) {
  return [command = std::move(command), timeout_seconds](const std::string& in) {
    return run_put(command, in, timeout_seconds);
  };
}

// "builtin" names the bundled converter, anything else is a command line.
inline Put make_put(const std::string& spec, double timeout_seconds) {
  if (spec == "builtin") return builtin_put();
  return subprocess_put(split_command(spec), timeout_seconds);
}

struct DatasetSummary {
  std::size_t records = 0;
  std::size_t attempts = 0;
  std::size_t escalations = 0;
  std::size_t put_failures = 0;
  std::size_t put_timeouts = 0;
};

// Rounds without a single accepted pair before collection gives up.
inline constexpr std::size_t collect_max_barren_rounds = 10;

struct CollectResult {
  std::vector<SampleRecord> records;
  DatasetSummary summary;
};

inline CollectResult collect_pairs(const PreparedGrammar& g, const GeneratorConfig& cfg, const Put& put, std::size_t n,
                                   HashStore& store, const Hasher& hasher = Hasher()) {
  CollectResult res;
  if (n == 0) return res;
  Synthesizer synth(g, cfg, store, hasher, n);
  std::size_t barren = 0;
  while (res.records.size() < n) {
    auto batch = synth.next(n - res.records.size());
    std::vector<std::optional<std::string>> outputs(batch.size());
    std::vector<int> failure(batch.size(), 0);
    parallel_for(batch.size(), cfg.worker_count, [&](std::size_t i) {
      try {
        outputs[i] = put(batch[i].text);
      } catch (const PutTimeout&) {
        failure[i] = 2;
      } catch (const PutFailure&) {
        failure[i] = 1;
      }
    });
    std::size_t accepted = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (!outputs[i]) {
        if (failure[i] == 2) {
          ++res.summary.put_timeouts;
        } else {
          ++res.summary.put_failures;
        }
        continue;
      }
      ++accepted;
      res.records.push_back({std::move(batch[i].text), std::move(*outputs[i]), std::move(batch[i].hash),
                             batch[i].min_expansions, batch[i].max_expansions, batch[i].seed});
    }
    barren = accepted == 0 ? barren + 1 : 0;
    if (barren >= collect_max_barren_rounds)
      throw GrammarExhausted("the program under test rejected every input in " + std::to_string(barren) + " rounds");
  }
  res.summary.records = res.records.size();
  res.summary.attempts = synth.attempts();
  res.summary.escalations = synth.escalations();
  return res;
}

inline DatasetSummary collect_pairs(const PreparedGrammar& g, const GeneratorConfig& cfg, const Put& put, std::size_t n,
                                    const std::string& dataset_path) {
  HashStore store(dataset_path + ".hashes");
  auto res = collect_pairs(g, cfg, put, n, store);
  write_records(dataset_path, res.records);
  store.save();
  return res.summary;
}

}  // namespace modelizer
