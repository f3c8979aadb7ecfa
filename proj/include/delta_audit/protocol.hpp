#pragma once

// Line-delimited JSON protocol for auditing models hosted in a child process.
//
//   request   {"op":"margin","id":7,"X":[[0.1,-1.2],...]}\n
//   response  {"id":7,"Y":[[...],...]}\n
//   error     {"id":7,"error":"message"}\n
//
// Ops: capabilities, predict, margin, proba, shutdown. The child writes only
// protocol lines to stdout; anything else on that channel is a protocol error.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "delta_audit/matrix.hpp"
#include "delta_audit/model_iface.hpp"

namespace delta_audit {

inline constexpr std::size_t kBridgeChunkRows = 4096;
inline constexpr double kProbaSumTolerance = 1e-9;

struct BridgeCapabilities {
  bool has_decision_function = false;
  bool has_predict_proba = false;
  int class_count = 0;
  std::string model_tag;
};

enum class BridgeOp { margin, proba, predict };

std::string to_string(BridgeOp op);

// Owns one child process speaking the protocol over its stdin/stdout.
// One request is in flight at a time; calls are serialized internally.
class BridgeClient {
 public:
  explicit BridgeClient(std::string command,
                        std::chrono::milliseconds timeout = std::chrono::seconds(10));
  ~BridgeClient();

  BridgeClient(const BridgeClient&) = delete;
  BridgeClient& operator=(const BridgeClient&) = delete;

  // Sends {"op":"capabilities","id":0} and validates the reply.
  BridgeCapabilities handshake();
  const BridgeCapabilities& capabilities() const { return caps_; }

  // margin / proba: n x C matrix (binary single-column margins are expanded).
  Matrix batch_score(BridgeOp op, const Matrix& X);
  std::vector<int> predict(const Matrix& X);

  // Sends shutdown and waits for the child to exit. Idempotent.
  void shutdown();

  std::size_t rows_scored() const { return rows_scored_; }
  std::size_t requests_sent() const { return requests_sent_; }
  const std::string& command() const { return command_; }

 private:
  struct Process;

  std::string roundtrip(const std::string& line);
  std::string read_line();
  void write_line(const std::string& line);

  std::string command_;
  std::chrono::milliseconds timeout_;
  std::unique_ptr<Process> proc_;
  BridgeCapabilities caps_;
  bool handshaken_ = false;
  std::int64_t next_id_ = 1;
  std::size_t lines_read_ = 0;
  std::size_t rows_scored_ = 0;
  std::size_t requests_sent_ = 0;
  std::string buffer_;
  std::mutex mutex_;
};

// ScoreModel backed by a bridge endpoint.
class BridgeScoreModel final : public ScoreModel {
 public:
  explicit BridgeScoreModel(std::shared_ptr<BridgeClient> client);

  Capabilities capabilities() const override;
  int class_count() const override { return caps_.class_count; }
  std::string tag() const override { return caps_.model_tag; }
  Matrix margins(const Matrix& X) const override;
  Matrix probabilities(const Matrix& X) const override;

  BridgeClient& client() const { return *client_; }

 private:
  std::shared_ptr<BridgeClient> client_;
  BridgeCapabilities caps_;
};

// Server side: answers protocol requests from `in` on `out` using `model`
// until shutdown or end of input. Malformed requests get error envelopes.
// Returns the number of requests handled.
std::size_t serve_protocol(const ScoreModel& model, std::istream& in, std::ostream& out);

}  // namespace delta_audit
