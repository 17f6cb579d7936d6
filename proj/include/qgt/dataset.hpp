#pragma once

// Offline trajectory datasets: standalone reduced instances, expert rollouts
// and the JSONL record format consumed by sequence-model trainers.

#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qgt/core.hpp"
#include "qgt/feasibility.hpp"
#include "qgt/parallel.hpp"
#include "qgt/rtg.hpp"
#include "qgt/strategies.hpp"

namespace qgt {

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  IoError(const std::string& what, std::size_t written)
      : Error(what + " (" + std::to_string(written) + " records written)"), written_(written) {}
  std::size_t written() const { return written_; }

 private:
  std::size_t written_;
};

struct DatasetStep {
  int rtg = 0;
  int state = 0;
  std::vector<int> action;

  friend bool operator==(const DatasetStep&, const DatasetStep&) = default;
};

// One episode in k-slot form. `solved` is only serialized when false.
struct DatasetRecord {
  int k = 0;
  std::vector<int> bounds;
  std::vector<DatasetStep> steps;
  std::vector<int> target;
  bool solved = true;

  friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

// ---------------------------------------------------------------------------
// Standalone instances

// Occupancy of k defectives dropped uniformly and independently into k groups.
inline BoundsVector sample_standalone_bounds(int k, Rng& rng) {
  if (k < 1) throw InvalidParameters("k must be at least 1");
  std::vector<int> u(static_cast<std::size_t>(k), 0);
  std::uniform_int_distribution<int> box(0, k - 1);
  for (int i = 0; i < k; ++i) ++u[static_cast<std::size_t>(box(rng))];
  return BoundsVector(std::move(u));
}

struct StandaloneInstance {
  BoundsVector padded;  // length k
  BoundsVector bounds;  // nonzero coordinates only
  EpisodeLayout layout;
  HiddenVector hidden;
};

// Drops zero-bound slots, remembering where the remaining coordinates sit.
inline std::pair<BoundsVector, EpisodeLayout> compact_bounds(const BoundsVector& padded) {
  std::vector<int> u;
  EpisodeLayout layout{static_cast<int>(padded.dim()), {}};
  for (std::size_t i = 0; i < padded.dim(); ++i) {
    if (padded[i] > 0) {
      u.push_back(padded[i]);
      layout.positions.push_back(static_cast<int>(i));
    }
  }
  return {BoundsVector(std::move(u)), std::move(layout)};
}

inline StandaloneInstance sample_standalone_instance(int k, Rng& rng) {
  StandaloneInstance inst;
  inst.padded = sample_standalone_bounds(k, rng);
  std::tie(inst.bounds, inst.layout) = compact_bounds(inst.padded);
  inst.hidden = sample_hidden_binomial(inst.bounds, rng);
  return inst;
}

// ---------------------------------------------------------------------------
// Conversion

inline DatasetRecord to_record(const Trajectory& traj, FinalReward final_reward = FinalReward::MinusOne) {
  const auto& layout = traj.layout;
  DatasetRecord rec;
  rec.k = layout.k;
  rec.bounds = layout.pad(traj.bounds.values());
  rec.target = layout.pad(traj.target.v);
  rec.solved = traj.solved;
  const auto rtg = compute_rtg(static_cast<int>(traj.steps.size()), final_reward);
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const auto& s = traj.steps[t];
    std::vector<int> reduced(s.action.begin(), s.action.end());
    rec.steps.push_back(DatasetStep{rtg[t], s.state, layout.pad(reduced)});
  }
  return rec;
}

inline void validate_record(const DatasetRecord& rec) {
  if (rec.k < 1) throw InvalidParameters("k must be at least 1");
  const auto k = static_cast<std::size_t>(rec.k);
  if (rec.bounds.size() != k) throw DimensionError("bounds length differs from k");
  if (rec.target.size() != k) throw DimensionError("target length differs from k");
  for (std::size_t i = 0; i < k; ++i) {
    if (rec.bounds[i] < 0) throw InvalidParameters("negative bound");
    if (rec.target[i] < 0 || rec.target[i] > rec.bounds[i]) throw InvalidParameters("target outside its bounds");
  }
  for (const auto& s : rec.steps) {
    if (s.action.size() != k) throw DimensionError("action length differs from k");
    for (int b : s.action)
      if (b != 0 && b != 1) throw InvalidParameters("action entries must be 0 or 1");
    if (s.rtg > 0) throw InvalidParameters("return-to-go must be non-positive");
    if (s.state < 0) throw InvalidParameters("negative state");
  }
}

// Re-simulates the record's actions against its target: states must match the
// answers, and the final feasible set must be a singleton exactly when the
// record claims the episode was solved.
inline bool replay_record(const DatasetRecord& rec) {
  validate_record(rec);
  const auto [bounds, layout] = compact_bounds(BoundsVector(rec.bounds));
  const HiddenVector target{layout.project(rec.target)};
  FeasibilityOracle oracle(bounds);
  int expected_state = rec.k;
  for (const auto& s : rec.steps) {
    if (s.state != expected_state) return false;
    for (int i = 0; i < rec.k; ++i)
      if (rec.bounds[static_cast<std::size_t>(i)] == 0 && s.action[static_cast<std::size_t>(i)] != 0) return false;
    const auto reduced = layout.project(s.action);
    const Mask mask(reduced.begin(), reduced.end());
    const int answer = inner_answer(target, mask);
    oracle.add(QueryRecord{mask, answer});
    expected_state = answer;
  }
  return oracle.identified() == rec.solved;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json record_to_json(const DatasetRecord& rec) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : rec.steps) steps.push_back({{"rtg", s.rtg}, {"state", s.state}, {"action", s.action}});
  nlohmann::json j = {{"k", rec.k}, {"bounds", rec.bounds}, {"steps", std::move(steps)}, {"target", rec.target}};
  if (!rec.solved) j["solved"] = false;
  return j;
}

inline DatasetRecord record_from_json(const nlohmann::json& j) {
  DatasetRecord rec;
  rec.k = j.at("k").get<int>();
  rec.bounds = j.at("bounds").get<std::vector<int>>();
  rec.target = j.at("target").get<std::vector<int>>();
  for (const auto& s : j.at("steps"))
    rec.steps.push_back(
        DatasetStep{s.at("rtg").get<int>(), s.at("state").get<int>(), s.at("action").get<std::vector<int>>()});
  rec.solved = j.value("solved", true);
  validate_record(rec);
  return rec;
}

inline std::string encode_record(const DatasetRecord& rec) { return record_to_json(rec).dump(); }

inline DatasetRecord decode_record(const std::string& line, std::size_t line_no) {
  try {
    return record_from_json(nlohmann::json::parse(line));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(line_no, e.what());
  } catch (const Error& e) {
    throw ParseError(line_no, e.what());
  }
}

inline void write_jsonl(std::ostream& out, const std::vector<DatasetRecord>& records) {
  std::size_t written = 0;
  for (const auto& r : records) {
    out << encode_record(r) << '\n';
    if (!out) throw IoError("write failed", written);
    ++written;
  }
}

inline std::vector<DatasetRecord> read_jsonl(std::istream& in) {
  std::vector<DatasetRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    out.push_back(decode_record(line, line_no));
  }
  return out;
}

// ---------------------------------------------------------------------------
// File sinks

class RecordSink {
 public:
  virtual ~RecordSink() = default;
  virtual void write(const DatasetRecord& rec) = 0;
  virtual void close() {}
  std::size_t written() const { return written_; }

 protected:
  std::size_t written_ = 0;
};

class StreamSink final : public RecordSink {
 public:
  explicit StreamSink(std::ostream& out) : out_(out) {}
  void write(const DatasetRecord& rec) override {
    out_ << encode_record(rec) << '\n';
    if (!out_) throw IoError("write to stream failed", written_);
    ++written_;
  }
  void close() override {
    out_.flush();
    if (!out_) throw IoError("flush failed", written_);
  }

 private:
  std::ostream& out_;
};

// Plain or gzip-compressed JSONL file.
class FileSink final : public RecordSink {
 public:
  FileSink(const std::string& path, bool gzip) : gzip_(gzip), path_(path) {
    if (gzip_) {
      gz_ = gzopen(path.c_str(), "wb");
      if (!gz_) throw IoError("cannot open " + path, 0);
    } else {
      file_.open(path, std::ios::out | std::ios::trunc);
      if (!file_) throw IoError("cannot open " + path, 0);
    }
  }
  FileSink(const FileSink&) = delete;
  FileSink& operator=(const FileSink&) = delete;
  ~FileSink() override {
    try {
      close();
    } catch (...) {
    }
  }

  void write(const DatasetRecord& rec) override {
    const std::string line = encode_record(rec) + '\n';
    if (gzip_) {
      if (!gz_ || gzwrite(gz_, line.data(), static_cast<unsigned>(line.size())) != static_cast<int>(line.size()))
        throw IoError("write to " + path_ + " failed", written_);
    } else {
      file_ << line;
      if (!file_) throw IoError("write to " + path_ + " failed", written_);
    }
    ++written_;
  }

  void close() override {
    if (gzip_) {
      if (gz_) {
        const int rc = gzclose(gz_);
        gz_ = nullptr;
        if (rc != Z_OK) throw IoError("closing " + path_ + " failed", written_);
      }
    } else if (file_.is_open()) {
      file_.close();
      if (file_.fail()) throw IoError("closing " + path_ + " failed", written_);
    }
  }

 private:
  bool gzip_;
  std::string path_;
  gzFile gz_ = nullptr;
  std::ofstream file_;
};

// Reads plain or gzip-compressed JSONL (zlib passes plain files through).
inline std::vector<DatasetRecord> read_jsonl_file(const std::string& path) {
  gzFile gz = gzopen(path.c_str(), "rb");
  if (!gz) throw IoError("cannot open " + path, 0);
  std::vector<DatasetRecord> out;
  std::string line;
  std::size_t line_no = 0;
  char buf[1 << 14];
  auto flush_line = [&] {
    ++line_no;
    if (!line.empty()) out.push_back(decode_record(line, line_no));
    line.clear();
  };
  try {
    while (gzgets(gz, buf, sizeof buf) != nullptr) {
      line += buf;
      if (!line.empty() && line.back() == '\n') {
        line.pop_back();
        flush_line();
      }
    }
    if (!line.empty()) flush_line();
  } catch (...) {
    gzclose(gz);
    throw;
  }
  gzclose(gz);
  return out;
}

// ---------------------------------------------------------------------------
// Generation

struct DatasetOptions {
  StrategyOptions strategy_options;
  int max_steps = 256;
  bool include_unsolved = false;
  FinalReward final_reward = FinalReward::MinusOne;
  unsigned workers = 1;
  std::size_t chunk = 4096;
};

struct DatasetSummary {
  std::size_t episodes = 0;
  std::size_t written = 0;
  double mean_length = 0.0;
  double solve_rate = 0.0;
};

// One standalone episode per index; the generator of episode i depends only
// on (seed, i), and records reach the sink in index order, so the output is
// the same for any worker count.
inline DatasetSummary generate_dataset(int k, const StrategyKind& strategy, std::size_t num_episodes,
                                       std::uint64_t seed, RecordSink& sink, const DatasetOptions& opts = {}) {
  if (strategy.id == StrategyId::External)
    throw InvalidParameters("dataset generation supports the in-process strategies only");
  DatasetSummary sum;
  std::size_t total_len = 0;
  std::size_t solved = 0;
  std::vector<Trajectory> chunk;
  for (std::size_t start = 0; start < num_episodes; start += opts.chunk) {
    const std::size_t len = std::min(opts.chunk, num_episodes - start);
    chunk.assign(len, Trajectory{});
    parallel_for(len, opts.workers, [&](unsigned, std::size_t i) {
      Rng rng = trial_rng(seed, start + i);
      auto inst = sample_standalone_instance(k, rng);
      auto policy = make_policy(strategy, opts.strategy_options);
      EpisodeOptions eo;
      eo.max_steps = opts.max_steps;
      eo.layout = inst.layout;
      chunk[i] = run_episode(inst.bounds, inst.hidden, *policy, rng, eo);
    });
    for (const auto& t : chunk) {
      ++sum.episodes;
      total_len += t.length();
      if (t.solved) ++solved;
      if (t.solved || opts.include_unsolved) sink.write(to_record(t, opts.final_reward));
    }
  }
  sink.close();
  sum.written = sink.written();
  if (sum.episodes > 0) {
    sum.mean_length = static_cast<double>(total_len) / static_cast<double>(sum.episodes);
    sum.solve_rate = static_cast<double>(solved) / static_cast<double>(sum.episodes);
  }
  return sum;
}

}  // namespace qgt
