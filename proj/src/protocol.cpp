#include "delta_audit/protocol.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <istream>
#include <mutex>
#include <ostream>
#include <thread>

#include "delta_audit/error.hpp"
#include "delta_audit/text.hpp"
#include "json.hpp"

namespace delta_audit {

using nlohmann::json;

std::string to_string(BridgeOp op) {
  switch (op) {
    case BridgeOp::margin: return "margin";
    case BridgeOp::proba: return "proba";
    case BridgeOp::predict: return "predict";
  }
  return "margin";
}

namespace {

void append_matrix(std::string& out, const Matrix& X, std::size_t begin, std::size_t end) {
  out += '[';
  for (std::size_t i = begin; i < end; ++i) {
    if (i != begin) out += ',';
    out += '[';
    auto row = X.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out += ',';
      if (!std::isfinite(row[j])) throw BridgeError("cannot send non-finite value over the bridge");
      out += format_double(row[j]);
    }
    out += ']';
  }
  out += ']';
}

std::string excerpt(const std::string& line) {
  constexpr std::size_t kMax = 200;
  return line.size() <= kMax ? line : line.substr(0, kMax) + "...";
}

Matrix matrix_from_json(const json& rows, std::size_t expected_rows, const std::string& what) {
  if (!rows.is_array()) throw BridgeError(what + ": expected an array of rows");
  if (rows.size() != expected_rows) {
    throw BridgeError(what + ": response has " + std::to_string(rows.size()) +
                      " rows, request had " + std::to_string(expected_rows));
  }
  Matrix out;
  std::vector<double> values;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (!r.is_array()) throw BridgeError(what + ": row " + std::to_string(i) + " is not an array");
    values.clear();
    for (const auto& v : r) {
      if (!v.is_number()) {
        throw BridgeError(what + ": row " + std::to_string(i) + " holds a non-numeric value");
      }
      const double x = v.get<double>();
      if (!std::isfinite(x)) {
        throw BridgeError(what + ": row " + std::to_string(i) + " holds a non-finite value");
      }
      values.push_back(x);
    }
    if (i > 0 && values.size() != out.cols()) {
      throw BridgeError(what + ": ragged response rows");
    }
    out.append_row(values);
  }
  return out;
}

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

}  // namespace

struct BridgeClient::Process {
  pid_t pid = -1;
  int to_child = -1;
  int from_child = -1;
  bool reaped = false;

  ~Process() {
    if (to_child >= 0) ::close(to_child);
    if (from_child >= 0) ::close(from_child);
    if (pid > 0 && !reaped) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, nullptr, 0);
    }
  }

  // Waits up to `timeout` for exit; kills the child if it does not exit.
  void reap(std::chrono::milliseconds timeout) {
    if (pid <= 0 || reaped) return;
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < deadline) {
      int status = 0;
      const pid_t r = ::waitpid(pid, &status, WNOHANG);
      if (r == pid || r < 0) {
        reaped = true;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    ::kill(pid, SIGKILL);
    ::waitpid(pid, nullptr, 0);
    reaped = true;
  }
};

BridgeClient::BridgeClient(std::string command, std::chrono::milliseconds timeout)
    : command_(std::move(command)), timeout_(timeout) {
  ignore_sigpipe();
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw BridgeError("bridge: pipe failed");
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw BridgeError("bridge: pipe failed");
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    throw BridgeError("bridge: fork failed for '" + command_ + "'");
  }
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  proc_ = std::make_unique<Process>();
  proc_->pid = pid;
  proc_->to_child = in_pipe[1];
  proc_->from_child = out_pipe[0];
}

BridgeClient::~BridgeClient() {
  try {
    shutdown();
  } catch (...) {
    // Process destructor kills the child.
  }
}

void BridgeClient::write_line(const std::string& line) {
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t w = ::write(proc_->to_child, line.data() + written, line.size() - written);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw BridgeError("bridge '" + command_ + "': write failed (" + std::strerror(errno) + ")");
    }
    written += static_cast<std::size_t>(w);
  }
}

std::string BridgeClient::read_line() {
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  while (true) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      ++lines_read_;
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      throw BridgeTimeout("bridge '" + command_ + "': no response within " +
                          std::to_string(timeout_.count()) + " ms");
    }
    pollfd pfd{proc_->from_child, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw BridgeError("bridge '" + command_ + "': poll failed");
    }
    if (ready == 0) continue;
    char chunk[65536];
    const ssize_t r = ::read(proc_->from_child, chunk, sizeof(chunk));
    if (r < 0) {
      if (errno == EINTR) continue;
      throw BridgeError("bridge '" + command_ + "': read failed");
    }
    if (r == 0) {
      throw BridgeError("bridge '" + command_ + "': process closed its output" +
                        (buffer_.empty() ? std::string() : " mid-line: '" + excerpt(buffer_) + "'"));
    }
    buffer_.append(chunk, static_cast<std::size_t>(r));
  }
}

std::string BridgeClient::roundtrip(const std::string& line) {
  write_line(line);
  ++requests_sent_;
  return read_line();
}

namespace {

json parse_response(const std::string& line, std::size_t line_no, std::int64_t id,
                    const std::string& command) {
  json msg;
  try {
    msg = json::parse(line);
  } catch (const json::parse_error& e) {
    throw BridgeError("bridge '" + command + "': malformed JSON on response line " +
                      std::to_string(line_no) + " at byte offset " + std::to_string(e.byte) +
                      ": '" + excerpt(line) + "'");
  }
  if (!msg.is_object() || !msg.contains("id") || !msg["id"].is_number_integer()) {
    throw BridgeError("bridge '" + command + "': response line " + std::to_string(line_no) +
                      " is not a protocol message: '" + excerpt(line) + "'");
  }
  const auto got = msg["id"].get<std::int64_t>();
  if (got != id) {
    throw BridgeError("bridge '" + command + "': response id " + std::to_string(got) +
                      " does not match request id " + std::to_string(id));
  }
  if (msg.contains("error")) {
    throw BridgeError("bridge '" + command + "' reported: " +
                      (msg["error"].is_string() ? msg["error"].get<std::string>()
                                                : msg["error"].dump()));
  }
  return msg;
}

}  // namespace

BridgeCapabilities BridgeClient::handshake() {
  std::lock_guard lock(mutex_);
  const std::string line = roundtrip("{\"op\":\"capabilities\",\"id\":0}\n");
  const json msg = parse_response(line, lines_read_, 0, command_);
  BridgeCapabilities caps;
  try {
    caps.has_decision_function = msg.at("has_decision_function").get<bool>();
    caps.has_predict_proba = msg.at("has_predict_proba").get<bool>();
    caps.class_count = msg.at("class_count").get<int>();
    caps.model_tag = msg.value("model_tag", std::string("bridge"));
  } catch (const json::exception& e) {
    throw BridgeError("bridge '" + command_ + "': bad capabilities response: " + e.what());
  }
  if (!caps.has_decision_function && !caps.has_predict_proba) {
    throw BridgeError("bridge '" + command_ + "': model exposes neither decision function nor "
                      "probabilities");
  }
  if (caps.class_count < 2) {
    throw BridgeError("bridge '" + command_ + "': class_count must be >= 2");
  }
  caps_ = caps;
  handshaken_ = true;
  return caps_;
}

Matrix BridgeClient::batch_score(BridgeOp op, const Matrix& X) {
  if (op == BridgeOp::predict) throw std::invalid_argument("batch_score: use predict()");
  std::lock_guard lock(mutex_);
  if (!handshaken_) throw BridgeError("bridge '" + command_ + "': handshake not done");
  if (op == BridgeOp::margin && !caps_.has_decision_function) {
    throw BridgeError("bridge '" + command_ + "': margin requested but not supported");
  }
  if (op == BridgeOp::proba && !caps_.has_predict_proba) {
    throw BridgeError("bridge '" + command_ + "': proba requested but not supported");
  }
  const auto C = static_cast<std::size_t>(caps_.class_count);
  Matrix out(0, C);
  for (std::size_t begin = 0; begin < X.rows(); begin += kBridgeChunkRows) {
    const std::size_t end = std::min(X.rows(), begin + kBridgeChunkRows);
    const std::int64_t id = next_id_++;
    std::string req = "{\"op\":\"" + to_string(op) + "\",\"id\":" + std::to_string(id) + ",\"X\":";
    append_matrix(req, X, begin, end);
    req += "}\n";
    const std::string line = roundtrip(req);
    const json msg = parse_response(line, lines_read_, id, command_);
    if (!msg.contains("Y")) throw BridgeError("bridge '" + command_ + "': response lacks 'Y'");
    Matrix part = matrix_from_json(msg["Y"], end - begin, "bridge '" + command_ + "' " + to_string(op));
    if (op == BridgeOp::margin && C == 2 && part.cols() == 1) part = expand_binary_margin(part);
    if (part.rows() > 0 && part.cols() != C) {
      throw BridgeError("bridge '" + command_ + "': expected " + std::to_string(C) +
                        " columns, got " + std::to_string(part.cols()));
    }
    if (op == BridgeOp::proba) {
      for (std::size_t i = 0; i < part.rows(); ++i) {
        double total = 0.0;
        for (double p : part.row(i)) {
          if (p < 0.0) throw BridgeError("bridge '" + command_ + "': negative probability");
          total += p;
        }
        if (std::abs(total - 1.0) > kProbaSumTolerance) {
          throw BridgeError("bridge '" + command_ + "': probability row " +
                            std::to_string(begin + i) + " sums to " + format_double(total));
        }
      }
    }
    for (std::size_t i = 0; i < part.rows(); ++i) out.append_row(part.row(i));
    rows_scored_ += end - begin;
  }
  return out;
}

std::vector<int> BridgeClient::predict(const Matrix& X) {
  std::lock_guard lock(mutex_);
  if (!handshaken_) throw BridgeError("bridge '" + command_ + "': handshake not done");
  std::vector<int> out;
  out.reserve(X.rows());
  for (std::size_t begin = 0; begin < X.rows(); begin += kBridgeChunkRows) {
    const std::size_t end = std::min(X.rows(), begin + kBridgeChunkRows);
    const std::int64_t id = next_id_++;
    std::string req = "{\"op\":\"predict\",\"id\":" + std::to_string(id) + ",\"X\":";
    append_matrix(req, X, begin, end);
    req += "}\n";
    const std::string line = roundtrip(req);
    const json msg = parse_response(line, lines_read_, id, command_);
    if (!msg.contains("y") || !msg["y"].is_array()) {
      throw BridgeError("bridge '" + command_ + "': predict response lacks 'y'");
    }
    if (msg["y"].size() != end - begin) {
      throw BridgeError("bridge '" + command_ + "': predict returned " +
                        std::to_string(msg["y"].size()) + " labels for " +
                        std::to_string(end - begin) + " rows");
    }
    for (const auto& v : msg["y"]) {
      if (!v.is_number_integer()) throw BridgeError("bridge '" + command_ + "': non-integer label");
      const int label = v.get<int>();
      if (label < 0 || label >= caps_.class_count) {
        throw BridgeError("bridge '" + command_ + "': label out of range");
      }
      out.push_back(label);
    }
  }
  return out;
}

void BridgeClient::shutdown() {
  std::lock_guard lock(mutex_);
  if (!proc_ || proc_->reaped) return;
  const std::int64_t id = next_id_++;
  try {
    const std::string line =
        roundtrip("{\"op\":\"shutdown\",\"id\":" + std::to_string(id) + "}\n");
    parse_response(line, lines_read_, id, command_);
  } catch (...) {
    ::close(proc_->to_child);
    proc_->to_child = -1;
    proc_->reap(std::chrono::milliseconds(200));
    throw;
  }
  ::close(proc_->to_child);
  proc_->to_child = -1;
  proc_->reap(timeout_);
}

BridgeScoreModel::BridgeScoreModel(std::shared_ptr<BridgeClient> client)
    : client_(std::move(client)) {
  caps_ = client_->capabilities();
  if (caps_.class_count < 2) caps_ = client_->handshake();
}

Capabilities BridgeScoreModel::capabilities() const {
  return {caps_.has_decision_function, caps_.has_predict_proba};
}

Matrix BridgeScoreModel::margins(const Matrix& X) const {
  return client_->batch_score(BridgeOp::margin, X);
}

Matrix BridgeScoreModel::probabilities(const Matrix& X) const {
  return client_->batch_score(BridgeOp::proba, X);
}

// ---------------------------------------------------------------------------
// Server side

namespace {

void write_matrix_response(std::ostream& out, std::int64_t id, const Matrix& Y) {
  std::string line = "{\"id\":" + std::to_string(id) + ",\"Y\":";
  append_matrix(line, Y, 0, Y.rows());
  line += "}\n";
  out << line << std::flush;
}

void write_error(std::ostream& out, std::int64_t id, const std::string& message) {
  json msg;
  msg["id"] = id;
  msg["error"] = message;
  out << msg.dump() << '\n' << std::flush;
}

}  // namespace

std::size_t serve_protocol(const ScoreModel& model, std::istream& in, std::ostream& out) {
  std::size_t handled = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (trim_copy(line).empty()) continue;
    ++handled;
    std::int64_t id = -1;
    try {
      const json req = json::parse(line);
      if (!req.is_object() || !req.contains("op") || !req.contains("id")) {
        throw BridgeError("request must carry 'op' and 'id'");
      }
      id = req["id"].get<std::int64_t>();
      const std::string op = req["op"].get<std::string>();
      if (op == "capabilities") {
        const Capabilities caps = model.capabilities();
        out << "{\"id\":" << id << ",\"has_decision_function\":"
            << (caps.has_margin ? "true" : "false")
            << ",\"has_predict_proba\":" << (caps.has_probability ? "true" : "false")
            << ",\"class_count\":" << model.class_count()
            << ",\"model_tag\":" << json(model.tag()).dump() << "}\n"
            << std::flush;
      } else if (op == "shutdown") {
        out << "{\"id\":" << id << ",\"ok\":true}\n" << std::flush;
        return handled;
      } else if (op == "margin" || op == "proba" || op == "predict") {
        if (!req.contains("X")) throw BridgeError("request lacks 'X'");
        std::vector<std::vector<double>> rows = req["X"].get<std::vector<std::vector<double>>>();
        const Matrix X = Matrix::from_rows(rows);
        if (op == "predict") {
          const auto y = model.predict(X);
          out << "{\"id\":" << id << ",\"y\":" << json(y).dump() << "}\n" << std::flush;
        } else if (op == "margin") {
          if (!model.capabilities().has_margin) throw BridgeError("margin not supported");
          write_matrix_response(out, id, model.margins(X));
        } else {
          if (!model.capabilities().has_probability) throw BridgeError("proba not supported");
          write_matrix_response(out, id, model.probabilities(X));
        }
      } else {
        throw BridgeError("unknown op '" + op + "'");
      }
    } catch (const std::exception& e) {
      write_error(out, id, e.what());
    }
  }
  return handled;
}

}  // namespace delta_audit
