#include "edgenas/subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>
#include <mutex>
#include <thread>
#include <utility>
#include <algorithm>

#include "edgenas/error.hpp"

namespace edgenas {

CommandSpec command_from_json(const nlohmann::json& value, std::chrono::milliseconds timeout) {
  CommandSpec cmd;
  cmd.timeout = timeout;
  if (value.is_string()) {
    cmd.argv.push_back(value.get<std::string>());
  } else if (value.is_array() && !value.empty()) {
    for (const auto& a : value) {
      if (!a.is_string()) throw BackendError("command arguments must be strings");
      cmd.argv.push_back(a.get<std::string>());
    }
  } else {
    throw BackendError("command must be a string or a non-empty array of strings");
  }
  return cmd;
}

namespace {

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() { reset(); }
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  int get() const { return fd_; }
  int release() { return std::exchange(fd_, -1); }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

std::array<Fd, 2> make_pipe() {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) {
    throw BackendError(std::string("pipe failed: ") + std::strerror(errno));
  }
  return {Fd(fds[0]), Fd(fds[1])};
}

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

}  // namespace

ProcessResult run_process(const CommandSpec& cmd, std::string_view input) {
  if (cmd.argv.empty()) throw BackendError("empty command");
  ignore_sigpipe();

  std::vector<std::string> args = cmd.argv;
  if (args.size() == 1) args = {"/bin/sh", "-c", cmd.argv.front()};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  auto in = make_pipe();
  auto out = make_pipe();
  auto err = make_pipe();

  const pid_t pid = ::fork();
  if (pid < 0) throw BackendError(std::string("fork failed: ") + std::strerror(errno));
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(in[0].get(), STDIN_FILENO);
    ::dup2(out[1].get(), STDOUT_FILENO);
    ::dup2(err[1].get(), STDERR_FILENO);
    ::execvp(argv[0], argv.data());
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  in[0].reset();
  out[1].reset();
  err[1].reset();

  ProcessResult result;
  Fd stdin_w = std::move(in[1]);
  Fd stdout_r = std::move(out[0]);
  Fd stderr_r = std::move(err[0]);
  std::size_t written = 0;
  if (input.empty()) stdin_w.reset();
  if (stdin_w.get() >= 0) ::fcntl(stdin_w.get(), F_SETFL, O_NONBLOCK);

  const auto deadline = std::chrono::steady_clock::now() + cmd.timeout;
  std::array<char, 4096> buf{};
  while (stdout_r.get() >= 0 || stderr_r.get() >= 0) {
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) {
      result.timed_out = true;
      break;
    }
    std::array<pollfd, 3> fds{};
    nfds_t n = 0;
    const auto add = [&](const Fd& fd, short events) {
      if (fd.get() >= 0) fds[n++] = pollfd{fd.get(), events, 0};
    };
    add(stdout_r, POLLIN);
    add(stderr_r, POLLIN);
    add(stdin_w, POLLOUT);
    const int rc = ::poll(fds.data(), n, static_cast<int>(std::min<long long>(
                                             remaining.count(), 1000)));
    if (rc < 0) {
      if (errno == EINTR) continue;
      break;
    }
    for (nfds_t i = 0; i < n; ++i) {
      if (fds[i].revents == 0) continue;
      if (fds[i].fd == stdin_w.get()) {
        const ssize_t w = ::write(stdin_w.get(), input.data() + written, input.size() - written);
        if (w > 0) written += static_cast<std::size_t>(w);
        if (w < 0 && errno != EAGAIN) stdin_w.reset();
        if (written >= input.size()) stdin_w.reset();
        continue;
      }
      Fd& src = fds[i].fd == stdout_r.get() ? stdout_r : stderr_r;
      std::string& dst = &src == &stdout_r ? result.stdout_text : result.stderr_text;
      const ssize_t r = ::read(src.get(), buf.data(), buf.size());
      if (r > 0) {
        dst.append(buf.data(), static_cast<std::size_t>(r));
      } else if (r == 0 || errno != EAGAIN) {
        src.reset();
      }
    }
  }
  stdin_w.reset();

  int status = 0;
  while (!result.timed_out) {
    const pid_t done = ::waitpid(pid, &status, WNOHANG);
    if (done == pid || (done < 0 && errno != EINTR)) break;
    if (std::chrono::steady_clock::now() >= deadline) {
      result.timed_out = true;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  if (result.timed_out) {
    ::kill(-pid, SIGKILL);
    ::kill(pid, SIGKILL);
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
  }
  if (!result.timed_out && WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
  return result;
}

}  // namespace edgenas
