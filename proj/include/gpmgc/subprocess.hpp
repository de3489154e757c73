#pragma once

// External objective over a line-delimited JSON protocol (POSIX only).
//
//   request  {"x":[x1,...,xD]}\n
//   response {"y":<real>}\n   or   {"error":"<message>"}\n
//
// The child is started once through /bin/sh -c and kept alive for the whole
// session; exactly one request is in flight at a time.

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <string>

#include <nlohmann/json.hpp>

#include "gpmgc/box.hpp"
#include "gpmgc/error.hpp"

namespace gpmgc {

inline std::string format_request(const Vector& x) {
  nlohmann::json j;
  j["x"] = std::vector<double>(x.data(), x.data() + x.size());
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::strict) + "\n";
}

/// Parses one response line. Throws ObjectiveFailure on error objects or
/// malformed text, keeping the offending line as payload.
inline double parse_response(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    throw ObjectiveFailure("external objective: malformed response", line);
  }
  if (!j.is_object()) throw ObjectiveFailure("external objective: response is not an object", line);
  if (j.contains("error")) {
    const auto& e = j["error"];
    throw ObjectiveFailure("external objective reported error: " +
                               (e.is_string() ? e.get<std::string>() : e.dump()),
                           line);
  }
  if (!j.contains("y") || !j["y"].is_number())
    throw ObjectiveFailure("external objective: response lacks numeric \"y\"", line);
  const double y = j["y"].get<double>();
  if (!std::isfinite(y)) throw ObjectiveFailure("external objective: non-finite y", line);
  return y;
}

class ExternalObjective {
 public:
  ExternalObjective(std::string command, std::chrono::milliseconds timeout)
      : command_(std::move(command)), timeout_(timeout) {
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0)
      throw ObjectiveFailure(std::string("external objective: socketpair failed: ") + std::strerror(errno));
    pid_ = ::fork();
    if (pid_ < 0) {
      ::close(fds[0]);
      ::close(fds[1]);
      throw ObjectiveFailure(std::string("external objective: fork failed: ") + std::strerror(errno));
    }
    if (pid_ == 0) {
      ::setpgid(0, 0);  // own process group, so the whole shell pipeline can be killed
      ::close(fds[0]);
      ::dup2(fds[1], STDIN_FILENO);
      ::dup2(fds[1], STDOUT_FILENO);
      if (fds[1] > STDOUT_FILENO) ::close(fds[1]);
      ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(fds[1]);
    fd_ = fds[0];
  }

  ExternalObjective(const ExternalObjective&) = delete;
  ExternalObjective& operator=(const ExternalObjective&) = delete;

  ~ExternalObjective() { shutdown(); }

  const std::string& command() const noexcept { return command_; }

  double operator()(const Vector& x) {
    if (fd_ < 0) throw ObjectiveFailure("external objective: child already terminated");
    write_all(format_request(x));
    return parse_response(read_line());
  }

 private:
  void write_all(const std::string& data) {
    std::size_t sent = 0;
    while (sent < data.size()) {
      const ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        fail("external objective: write failed: " + std::string(std::strerror(errno)));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  std::string read_line() {
    using clock = std::chrono::steady_clock;
    const auto deadline = clock::now() + timeout_;
    for (;;) {
      if (const auto pos = buffer_.find('\n'); pos != std::string::npos) {
        std::string line = buffer_.substr(0, pos);
        buffer_.erase(0, pos + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
      if (left.count() <= 0) fail("external objective: timed out after " +
                                  std::to_string(timeout_.count()) + " ms", buffer_);
      pollfd pfd{fd_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (rc < 0) {
        if (errno == EINTR) continue;
        fail("external objective: poll failed: " + std::string(std::strerror(errno)), buffer_);
      }
      if (rc == 0) continue;
      char chunk[4096];
      const ssize_t n = ::read(fd_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        fail("external objective: read failed: " + std::string(std::strerror(errno)), buffer_);
      }
      if (n == 0) {
        const std::string partial = buffer_;
        const int status = reap();
        fail("external objective: child closed its output (" + describe(status) + ")", partial);
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  [[noreturn]] void fail(const std::string& what, std::string payload = {}) {
    shutdown();
    throw ObjectiveFailure(what, std::move(payload));
  }

  static std::string describe(int status) {
    if (status == -1) return "status unknown";
    if (WIFEXITED(status)) return "exit status " + std::to_string(WEXITSTATUS(status));
    if (WIFSIGNALED(status)) return "killed by signal " + std::to_string(WTERMSIG(status));
    return "status " + std::to_string(status);
  }

  int reap() {
    if (pid_ <= 0) return -1;
    int status = 0;
    pid_t r;
    do {
      r = ::waitpid(pid_, &status, 0);
    } while (r < 0 && errno == EINTR);
    pid_ = -1;
    return r < 0 ? -1 : status;
  }

  void shutdown() noexcept {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
    if (pid_ > 0) {
      // Give the child a moment to exit on EOF before killing it.
      for (int i = 0; i < 50; ++i) {
        int status = 0;
        if (::waitpid(pid_, &status, WNOHANG) == pid_) {
          pid_ = -1;
          return;
        }
        ::usleep(2000);
      }
      ::kill(-pid_, SIGKILL);
      ::kill(pid_, SIGKILL);
      int status = 0;
      ::waitpid(pid_, &status, 0);
      pid_ = -1;
    }
  }

  std::string command_;
  std::chrono::milliseconds timeout_;
  pid_t pid_ = -1;
  int fd_ = -1;
  std::string buffer_;
};

}  // namespace gpmgc
