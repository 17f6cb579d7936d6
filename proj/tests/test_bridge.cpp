#include <gtest/gtest.h>

#include <deque>
#include <sstream>

#include "qgt/bridge.hpp"
#include "qgt/dataset.hpp"

using namespace qgt;

namespace {

const std::string kCli = QGT_CLI_PATH;

// In-process peer: every sent line is logged, replies come from a callback
// that sees the latest line.
class ScriptedChannel final : public LineChannel {
 public:
  using Script = std::function<std::optional<std::string>(const std::string& last_sent)>;
  ScriptedChannel(Script script, std::vector<std::string>* log) : script_(std::move(script)), log_(log) {}

  void send(const std::string& line) override { log_->push_back(line); }
  std::optional<std::string> receive(std::chrono::milliseconds) override {
    return script_(log_->empty() ? std::string() : log_->back());
  }

 private:
  Script script_;
  std::vector<std::string>* log_;
};

ChannelFactory scripted(ScriptedChannel::Script s, std::vector<std::string>* log) {
  return [s, log] { return std::make_unique<ScriptedChannel>(s, log); };
}

std::string query_line(std::vector<int> mask) { return encode_message(msg::Query{std::move(mask)}); }

}  // namespace

TEST(Codec, RoundTripsEveryMessageType) {
  const std::vector<BridgeMessage> all = {
      msg::Init{2, {1, 1}, -2}, msg::Query{{1, 0}}, msg::Result{1, false, -1},
      msg::Result{2, true, -1}, msg::Done{},        msg::Error{"bad mask \"x\"\nsecond line"},
  };
  for (const auto& m : all) {
    const auto line = encode_message(m);
    EXPECT_EQ(line.find('\n'), std::string::npos);
    EXPECT_EQ(decode_message(line), m);
  }
}

TEST(Codec, InitCarriesExactlyItsFields) {
  const auto j = nlohmann::json::parse(encode_message(msg::Init{2, {1, 1}, -2}));
  EXPECT_EQ(j, nlohmann::json::parse(R"({"type":"init","k":2,"bounds":[1,1],"rtg":-2})"));
}

TEST(Codec, GarbageNamesTheLine) {
  try {
    decode_message("hello there");
    FAIL();
  } catch (const ProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find("hello there"), std::string::npos);
  }
  EXPECT_THROW(decode_message(R"({"type":"launch"})"), ProtocolError);
  EXPECT_THROW(decode_message(R"({"type":"query"})"), ProtocolError);
  EXPECT_THROW(decode_message(R"({"type":"result","answer":1,"solved":"no","rtg":-1})"), ProtocolError);
  EXPECT_THROW(decode_message(R"([1,2])"), ProtocolError);
}

// The harness talks to the CLI's reference agent in a child process and gets
// exactly the trajectories of the in-process expert.
TEST(ExternalPolicy, ChildProcessReplayIsIdentical) {
  for (const char* name : {"entropy", "covariance"}) {
    ExternalPolicy ext(child_process_factory(kCli + " agent --strategy " + name));
    auto local = make_policy(StrategyKind::parse(name));
    for (std::uint64_t i = 0; i < 150; ++i) {
      Rng r1 = trial_rng(3, i), r2 = trial_rng(3, i);
      const auto inst = sample_standalone_instance(5, r1);
      sample_standalone_instance(5, r2);
      EpisodeOptions eo;
      eo.layout = inst.layout;
      eo.max_steps = 64;
      const auto a = run_episode(inst.bounds, inst.hidden, ext, r1, eo);
      const auto b = run_episode(inst.bounds, inst.hidden, *local, r2, eo);
      ASSERT_FALSE(a.failed()) << a.failure;
      ASSERT_EQ(a, b);
      ASSERT_EQ(encode_record(to_record(a)), encode_record(to_record(b)));
    }
    EXPECT_TRUE(ext.connected());
    ext.close();
  }
}

// Replaying a recorded expert trace through a scripted agent reproduces it.
TEST(ExternalPolicy, ScriptedEchoAgentReproducesTrace) {
  Rng rng(0);
  const BoundsVector u({2, 1, 3});
  EpisodeOptions eo;
  eo.layout = EpisodeLayout{4, {0, 1, 3}};
  const HiddenVector h{{1, 1, 2}};
  const auto expert = run_episode(u, h, StrategyKind::entropy(), rng, eo);

  std::deque<std::string> replies;
  for (const auto& s : expert.steps) replies.push_back(query_line(eo.layout->pad(std::vector<int>(s.action.begin(), s.action.end()))));
  std::vector<std::string> log;
  ExternalPolicy ext(scripted(
      [&](const std::string&) -> std::optional<std::string> {
        auto r = replies.front();
        replies.pop_front();
        return r;
      },
      &log));
  const auto replay = run_episode(u, h, ext, rng, eo);
  EXPECT_EQ(replay, expert);
  EXPECT_EQ(encode_record(to_record(replay)), encode_record(to_record(expert)));

  // init, one result per non-final query, then the solving result
  ASSERT_EQ(log.size(), expert.steps.size() + 1);
  EXPECT_EQ(decode_message(log.front()), BridgeMessage(msg::Init{4, {2, 1, 0, 3}, -4}));
  const auto last = std::get<msg::Result>(decode_message(log.back()));
  EXPECT_TRUE(last.solved);
}

TEST(ExternalPolicy, RtgStartsAtInitialValueAndClampsAtMinusOne) {
  std::vector<std::string> log;
  Rng rng(0);
  EpisodeOptions eo;
  eo.max_steps = 4;
  // The agent keeps asking the same uninformative pair.
  ExternalPolicy stubborn(scripted([](const std::string&) { return std::optional<std::string>(query_line({1, 1})); }, &log),
                          BridgeOptions{std::chrono::milliseconds(1000), -2});
  eo.layout = EpisodeLayout{2, {0, 1}};
  const auto t2 = run_episode(BoundsVector({1, 1}), HiddenVector{{1, 0}}, stubborn, rng, eo);
  EXPECT_FALSE(t2.solved);
  EXPECT_EQ(t2.length(), 4u);
  std::vector<int> fed;
  for (const auto& line : log) {
    const auto m = decode_message(line);
    if (auto* i = std::get_if<msg::Init>(&m)) fed.push_back(i->rtg);
    if (auto* r = std::get_if<msg::Result>(&m)) fed.push_back(r->rtg);
  }
  EXPECT_EQ(fed, (std::vector<int>{-2, -1, -1, -1}));
  EXPECT_TRUE(std::holds_alternative<msg::Done>(decode_message(log.back())));
}

TEST(ExternalPolicy, WrongLengthMaskFailsEpisode) {
  std::vector<std::string> log;
  ExternalPolicy ext(scripted([](const std::string&) { return std::optional<std::string>(query_line({1, 0, 1})); }, &log));
  Rng rng(0);
  const auto t = run_episode(BoundsVector({1, 1}), HiddenVector{{1, 0}}, ext, rng);
  EXPECT_TRUE(t.failed());
  EXPECT_FALSE(t.solved);
  EXPECT_NE(t.failure.find("length 3"), std::string::npos);
  EXPECT_FALSE(ext.connected());
  EXPECT_TRUE(std::holds_alternative<msg::Error>(decode_message(log.back())));
}

TEST(ExternalPolicy, NonBinaryOrEmptyMaskFailsEpisode) {
  for (auto bad : {std::vector<int>{2, 0}, std::vector<int>{0, 0}}) {
    std::vector<std::string> log;
    ExternalPolicy ext(scripted([&](const std::string&) { return std::optional<std::string>(query_line(bad)); }, &log));
    Rng rng(0);
    EXPECT_TRUE(run_episode(BoundsVector({1, 1}), HiddenVector{{1, 0}}, ext, rng).failed());
  }
}

TEST(ExternalPolicy, DisconnectFailsEpisodeAndNextEpisodeReconnects) {
  int sessions = 0;
  std::vector<std::string> log;
  auto factory = [&]() -> std::unique_ptr<LineChannel> {
    const bool dies = sessions++ == 0;
    return std::make_unique<ScriptedChannel>(
        [dies](const std::string& last) -> std::optional<std::string> {
          if (dies) return std::nullopt;
          const auto m = decode_message(last);
          return query_line(std::holds_alternative<msg::Init>(m) ? std::vector<int>{1, 1} : std::vector<int>{0, 1});
        },
        &log);
  };
  ExternalPolicy ext(factory);
  Rng rng(0);
  const auto first = run_episode(BoundsVector({1, 1}), HiddenVector{{1, 0}}, ext, rng);
  EXPECT_TRUE(first.failed());
  EXPECT_NE(first.failure.find("disconnected"), std::string::npos);
  const auto second = run_episode(BoundsVector({1, 1}), HiddenVector{{1, 0}}, ext, rng);
  EXPECT_FALSE(second.failed());
  EXPECT_TRUE(second.solved);
  EXPECT_EQ(sessions, 2);
}

TEST(ExternalPolicy, ChildThatExitsIsADisconnect) {
  ExternalPolicy ext(child_process_factory("read line; exit 0"));
  Rng rng(0);
  const auto t = run_episode(BoundsVector({1, 1}), HiddenVector{{1, 0}}, ext, rng);
  EXPECT_TRUE(t.failed());
}

TEST(ExternalPolicy, SilentChildTimesOut) {
  ExternalPolicy ext(child_process_factory("exec sleep 5"), BridgeOptions{std::chrono::milliseconds(200), {}});
  Rng rng(0);
  const auto start = std::chrono::steady_clock::now();
  const auto t = run_episode(BoundsVector({1, 1}), HiddenVector{{1, 0}}, ext, rng);
  EXPECT_TRUE(t.failed());
  EXPECT_NE(t.failure.find("timed out"), std::string::npos);
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(3));
}

TEST(ExternalPolicy, MissingCommandFails) {
  ExternalPolicy ext(child_process_factory("/nonexistent/agent-binary"));
  Rng rng(0);
  EXPECT_TRUE(run_episode(BoundsVector({1}), HiddenVector{{1}}, ext, rng).failed());
}

TEST(ReferenceAgent, AnswersInitAndStopsOnSolved) {
  std::istringstream in(encode_message(msg::Init{2, {1, 1}, -2}) + "\n" + encode_message(msg::Result{1, false, -1}) +
                        "\n" + encode_message(msg::Result{0, true, -1}) + "\n");
  std::ostringstream out;
  EXPECT_EQ(run_reference_agent(in, out, StrategyKind::entropy()), 0);
  EXPECT_EQ(out.str(), query_line({1, 1}) + "\n" + query_line({0, 1}) + "\n");
}

TEST(ReferenceAgent, MalformedInitGetsErrorReply) {
  std::istringstream in(R"({"type":"init","k":3,"bounds":[1,1],"rtg":-3})" "\n");
  std::ostringstream out;
  EXPECT_EQ(run_reference_agent(in, out, StrategyKind::entropy()), 2);
  EXPECT_TRUE(std::holds_alternative<msg::Error>(decode_message(out.str().substr(0, out.str().find('\n')))));
}
