#pragma once

// Line-delimited JSON protocol between the episode harness and an external
// query agent running as a child process.
//
//   harness -> agent   {"type":"init","k":..,"bounds":[..],"rtg":..}
//   agent -> harness   {"type":"query","mask":[0,1,..]}
//   harness -> agent   {"type":"result","answer":..,"solved":..,"rtg":..}
//   ... query/result alternate until a result carries "solved":true ...
//   harness -> agent   {"type":"done"}             episode abandoned
//   either direction   {"type":"error","reason":".."}
//
// A session may carry several episodes back to back; each starts with init.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "qgt/core.hpp"
#include "qgt/feasibility.hpp"
#include "qgt/strategies.hpp"

namespace qgt {

class ProtocolError : public Error {
 public:
  using Error::Error;
};

namespace msg {

struct Init {
  int k = 0;
  std::vector<int> bounds;
  int rtg = 0;
  friend bool operator==(const Init&, const Init&) = default;
};

struct Query {
  std::vector<int> mask;
  friend bool operator==(const Query&, const Query&) = default;
};

struct Result {
  int answer = 0;
  bool solved = false;
  int rtg = 0;
  friend bool operator==(const Result&, const Result&) = default;
};

struct Done {
  friend bool operator==(const Done&, const Done&) = default;
};

struct Error {
  std::string reason;
  friend bool operator==(const Error&, const Error&) = default;
};

}  // namespace msg

using BridgeMessage = std::variant<msg::Init, msg::Query, msg::Result, msg::Done, msg::Error>;

inline std::string encode_message(const BridgeMessage& m) {
  nlohmann::json j;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, msg::Init>) {
          j = {{"type", "init"}, {"k", v.k}, {"bounds", v.bounds}, {"rtg", v.rtg}};
        } else if constexpr (std::is_same_v<T, msg::Query>) {
          j = {{"type", "query"}, {"mask", v.mask}};
        } else if constexpr (std::is_same_v<T, msg::Result>) {
          j = {{"type", "result"}, {"answer", v.answer}, {"solved", v.solved}, {"rtg", v.rtg}};
        } else if constexpr (std::is_same_v<T, msg::Done>) {
          j = {{"type", "done"}};
        } else {
          j = {{"type", "error"}, {"reason", v.reason}};
        }
      },
      m);
  return j.dump();
}

inline BridgeMessage decode_message(const std::string& line) {
  auto fail = [&](const std::string& why) -> ProtocolError {
    std::string shown = line.size() > 200 ? line.substr(0, 200) + "..." : line;
    return ProtocolError(why + " in line: " + shown);
  };
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    throw fail("malformed message");
  }
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) throw fail("missing message type");
  const auto type = j["type"].get<std::string>();
  try {
    if (type == "init") return msg::Init{j.at("k").get<int>(), j.at("bounds").get<std::vector<int>>(),
                                         j.at("rtg").get<int>()};
    if (type == "query") return msg::Query{j.at("mask").get<std::vector<int>>()};
    if (type == "result")
      return msg::Result{j.at("answer").get<int>(), j.at("solved").get<bool>(), j.at("rtg").get<int>()};
    if (type == "done") return msg::Done{};
    if (type == "error") return msg::Error{j.at("reason").get<std::string>()};
  } catch (const nlohmann::json::exception&) {
    throw fail("missing or mistyped field for '" + type + "'");
  }
  throw fail("unknown message type '" + type + "'");
}

// ---------------------------------------------------------------------------
// Transport

class LineChannel {
 public:
  virtual ~LineChannel() = default;
  // Throws AgentFailure when the peer is gone.
  virtual void send(const std::string& line) = 0;
  // nullopt on end of stream; throws AgentFailure on timeout.
  virtual std::optional<std::string> receive(std::chrono::milliseconds timeout) = 0;
};

// Runs `/bin/sh -c command` with its standard input and output connected to
// the channel. Standard error is inherited.
class ChildProcessChannel final : public LineChannel {
 public:
  explicit ChildProcessChannel(const std::string& command) {
    // Writes to a dead agent must fail with EPIPE instead of killing us.
    ::signal(SIGPIPE, SIG_IGN);
    int to_child[2];
    int from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) throw AgentFailure(std::string("pipe: ") + std::strerror(errno));
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw AgentFailure(std::string("pipe: ") + std::strerror(errno));
    }
    pid_ = ::fork();
    if (pid_ < 0) {
      for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
      throw AgentFailure(std::string("fork: ") + std::strerror(errno));
    }
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
  }

  ChildProcessChannel(const ChildProcessChannel&) = delete;
  ChildProcessChannel& operator=(const ChildProcessChannel&) = delete;

  ~ChildProcessChannel() override {
    if (write_fd_ >= 0) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    if (pid_ > 0) {
      // Give the agent a moment to exit on EOF, then make sure it does.
      for (int i = 0; i < 50; ++i) {
        if (::waitpid(pid_, nullptr, WNOHANG) == pid_) return;
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
      }
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, nullptr, 0);
    }
  }

  void send(const std::string& line) override {
    const std::string data = line + '\n';
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::write(write_fd_, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw AgentFailure("agent disconnected (" + std::string(std::strerror(errno)) + ")");
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::optional<std::string> receive(std::chrono::milliseconds timeout) override {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      if (eof_) {
        if (buffer_.empty()) return std::nullopt;
        std::string rest = std::move(buffer_);
        buffer_.clear();
        return rest;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw AgentFailure("agent timed out");
      pollfd p{read_fd_, POLLIN, 0};
      const int rc = ::poll(&p, 1, static_cast<int>(left.count()));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw AgentFailure(std::string("poll: ") + std::strerror(errno));
      }
      if (rc == 0) throw AgentFailure("agent timed out");
      char buf[4096];
      const ssize_t n = ::read(read_fd_, buf, sizeof buf);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw AgentFailure(std::string("read: ") + std::strerror(errno));
      }
      if (n == 0) {
        eof_ = true;
      } else {
        buffer_.append(buf, static_cast<std::size_t>(n));
      }
    }
  }

 private:
  pid_t pid_ = -1;
  int write_fd_ = -1;
  int read_fd_ = -1;
  std::string buffer_;
  bool eof_ = false;
};

using ChannelFactory = std::function<std::unique_ptr<LineChannel>()>;

inline ChannelFactory child_process_factory(std::string command) {
  return [command = std::move(command)] { return std::make_unique<ChildProcessChannel>(command); };
}

// ---------------------------------------------------------------------------
// Harness side

struct BridgeOptions {
  std::chrono::milliseconds timeout{10000};
  std::optional<int> initial_rtg;  // defaults to -k
};

// Delegates query choice to an external agent. The harness keeps the
// return-to-go: it starts at the initial value, rises by one per query and
// stays at -1 once it gets there. A broken session is dropped and a fresh one
// is started at the next episode.
class ExternalPolicy final : public QueryPolicy {
 public:
  explicit ExternalPolicy(ChannelFactory factory, BridgeOptions opts = {})
      : factory_(std::move(factory)), opts_(opts) {}

  void begin(const BoundsVector& bounds, const EpisodeLayout& layout) override {
    layout_ = layout;
    step_ = 0;
    initial_rtg_ = opts_.initial_rtg.value_or(-layout.k);
    if (!channel_) {
      try {
        channel_ = factory_();
      } catch (const std::exception& e) {
        throw AgentFailure(std::string("cannot start agent: ") + e.what());
      }
    }
    guarded([&] { send(msg::Init{layout.k, layout.pad(bounds.values()), feed_rtg()}); });
  }

  Mask next_query(const PolicyView& view, Rng&) override {
    Mask mask;
    guarded([&] {
      if (!view.history.empty()) send(msg::Result{view.history.back().answer, false, feed_rtg()});
      const auto reply = receive();
      if (const auto* e = std::get_if<msg::Error>(&reply)) throw AgentFailure("agent error: " + e->reason);
      const auto* q = std::get_if<msg::Query>(&reply);
      if (!q) throw ProtocolError("expected a query message from the agent");
      mask = validate_mask(q->mask);
    });
    ++step_;
    return mask;
  }

  void finish(const PolicyView& view, bool solved) override {
    guarded([&] {
      if (solved && !view.history.empty()) {
        send(msg::Result{view.history.back().answer, true, feed_rtg()});
      } else {
        send(msg::Done{});
      }
    });
  }

  // Ends the session politely.
  void close() {
    if (channel_) {
      try {
        send(msg::Done{});
      } catch (...) {
      }
      channel_.reset();
    }
  }

  bool connected() const { return channel_ != nullptr; }
  int feed_rtg() const { return std::min(initial_rtg_ + step_, -1); }

 private:
  template <typename Fn>
  void guarded(Fn&& fn) {
    if (!channel_) throw AgentFailure("agent session is closed");
    try {
      fn();
    } catch (const AgentFailure&) {
      channel_.reset();
      throw;
    } catch (const Error& e) {
      try {
        channel_->send(encode_message(msg::Error{e.what()}));
      } catch (...) {
      }
      channel_.reset();
      throw AgentFailure(e.what());
    }
  }

  void send(const BridgeMessage& m) { channel_->send(encode_message(m)); }

  BridgeMessage receive() {
    auto line = channel_->receive(opts_.timeout);
    if (!line) throw AgentFailure("agent disconnected");
    return decode_message(*line);
  }

  Mask validate_mask(const std::vector<int>& padded) const {
    if (padded.size() != static_cast<std::size_t>(layout_.k))
      throw ProtocolError("mask has length " + std::to_string(padded.size()) + ", expected " +
                          std::to_string(layout_.k));
    for (int b : padded)
      if (b != 0 && b != 1) throw ProtocolError("mask entries must be 0 or 1");
    // Slots without a live coordinate are dropped, i.e. forced to zero.
    const auto reduced = layout_.project(padded);
    Mask mask(reduced.begin(), reduced.end());
    if (std::none_of(mask.begin(), mask.end(), [](auto b) { return b != 0; }))
      throw ProtocolError("mask selects no live coordinate");
    return mask;
  }

  ChannelFactory factory_;
  BridgeOptions opts_;
  std::unique_ptr<LineChannel> channel_;
  EpisodeLayout layout_;
  int step_ = 0;
  int initial_rtg_ = -1;
};

// ---------------------------------------------------------------------------
// Agent side

// Serves one of the in-process strategies over the protocol. Returns 0 on a
// clean end of stream, nonzero after a protocol error.
inline int run_reference_agent(std::istream& in, std::ostream& out, const StrategyKind& strategy,
                               const StrategyOptions& sopts = {}, std::uint64_t seed = 0) {
  auto policy = make_policy(strategy, sopts);
  Rng rng(seed);
  std::optional<FeasibilityOracle> oracle;
  BoundsVector bounds;
  EpisodeLayout layout;
  std::vector<QueryRecord> history;
  Mask last;

  auto reply = [&](const BridgeMessage& m) { out << encode_message(m) << '\n' << std::flush; };
  auto ask = [&] {
    PolicyView view{bounds, layout, oracle->feasible(), history};
    last = policy->next_query(view, rng);
    const auto padded = layout.pad(std::vector<int>(last.begin(), last.end()));
    reply(msg::Query{padded});
  };

  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto m = decode_message(line);
      if (const auto* init = std::get_if<msg::Init>(&m)) {
        if (init->bounds.size() != static_cast<std::size_t>(init->k)) throw ProtocolError("bounds length differs from k");
        std::vector<int> u;
        layout = EpisodeLayout{init->k, {}};
        for (int i = 0; i < init->k; ++i) {
          if (init->bounds[static_cast<std::size_t>(i)] > 0) {
            u.push_back(init->bounds[static_cast<std::size_t>(i)]);
            layout.positions.push_back(i);
          }
        }
        bounds = BoundsVector(u);
        oracle.emplace(bounds);
        history.clear();
        policy->begin(bounds, layout);
        ask();
      } else if (const auto* res = std::get_if<msg::Result>(&m)) {
        if (!oracle) throw ProtocolError("result before init");
        history.push_back(QueryRecord{last, res->answer});
        oracle->add(history.back());
        if (!res->solved) ask();
        else oracle.reset();
      } else if (std::holds_alternative<msg::Done>(m)) {
        oracle.reset();
      } else if (std::holds_alternative<msg::Error>(m)) {
        return 1;
      } else {
        throw ProtocolError("unexpected message from harness");
      }
    } catch (const Error& e) {
      reply(msg::Error{e.what()});
      return 2;
    }
  }
  return 0;
}

}  // namespace qgt
