#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "modelizer/errors.hpp"

namespace modelizer {

// Splits a command line on whitespace; single and double quotes group words
// and a backslash escapes the next character.
inline std::vector<std::string> split_command(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool have = false;
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote != 0) {
      if (c == quote) {
        quote = 0;
      } else if (c == '\\' && quote == '"' && i + 1 < line.size()) {
        cur += line[++i];
      } else {
        cur += c;
      }
    } else if (c == '\'' || c == '"') {
      quote = c;
      have = true;
    } else if (c == '\\' && i + 1 < line.size()) {
      cur += line[++i];
      have = true;
    } else if (c == ' ' || c == '\t' || c == '\n') {
      if (have) out.push_back(std::move(cur));
      cur.clear();
      have = false;
    } else {
      cur += c;
      have = true;
    }
  }
  if (quote != 0) throw Error("unterminated quote in command line", ErrorClass::usage);
  if (have) out.push_back(std::move(cur));
  return out;
}

struct ProcessResult {
  int exit_code = 0;
  std::string out;
  std::string err;
};

namespace detail {

inline void close_fd(int& fd) {
  if (fd >= 0) ::close(fd);
  fd = -1;
}

}  // namespace detail

// Runs argv with `input` on stdin and collects stdout/stderr. A negative
// timeout means no limit. Throws PutTimeout after killing the child.
inline ProcessResult run_process(const std::vector<std::string>& argv, std::string_view input, double timeout_seconds) {
  if (argv.empty()) throw Error("empty command", ErrorClass::usage);
  static const bool sigpipe_ignored = (::signal(SIGPIPE, SIG_IGN), true);
  (void)sigpipe_ignored;
  int in_pipe[2], out_pipe[2], err_pipe[2], exec_pipe[2];
  if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0 || ::pipe(err_pipe) != 0 || ::pipe(exec_pipe) != 0)
    throw Error(std::string("pipe: ") + std::strerror(errno), ErrorClass::put);
  ::fcntl(exec_pipe[1], F_SETFD, FD_CLOEXEC);

  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) throw Error(std::string("fork: ") + std::strerror(errno), ErrorClass::put);
  if (pid == 0) {
    ::dup2(in_pipe[0], 0);
    ::dup2(out_pipe[1], 1);
    ::dup2(err_pipe[1], 2);
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1], exec_pipe[0]})
      ::close(fd);
    ::execvp(args[0], args.data());
    const int e = errno;
    [[maybe_unused]] auto w = ::write(exec_pipe[1], &e, sizeof e);
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  ::close(exec_pipe[1]);

  int exec_errno = 0;
  if (::read(exec_pipe[0], &exec_errno, sizeof exec_errno) == static_cast<ssize_t>(sizeof exec_errno)) {
    ::close(exec_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(err_pipe[0]);
    ::waitpid(pid, nullptr, 0);
    throw PutFailure(127, "cannot execute " + argv[0] + ": " + std::strerror(exec_errno));
  }
  ::close(exec_pipe[0]);

  int to_child = in_pipe[1], from_out = out_pipe[0], from_err = err_pipe[0];
  ::fcntl(to_child, F_SETFL, O_NONBLOCK);
  std::size_t written = 0;
  if (input.empty()) detail::close_fd(to_child);

  ProcessResult res;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_seconds);
  char buf[65536];
  while (from_out >= 0 || from_err >= 0) {
    pollfd fds[3];
    int nfds = 0;
    if (to_child >= 0) fds[nfds++] = {to_child, POLLOUT, 0};
    if (from_out >= 0) fds[nfds++] = {from_out, POLLIN, 0};
    if (from_err >= 0) fds[nfds++] = {from_err, POLLIN, 0};
    int wait_ms = -1;
    if (timeout_seconds >= 0) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) {
        ::kill(pid, SIGKILL);
        ::waitpid(pid, nullptr, 0);
        detail::close_fd(to_child);
        detail::close_fd(from_out);
        detail::close_fd(from_err);
        throw PutTimeout(timeout_seconds);
      }
      wait_ms = static_cast<int>(left.count()) + 1;
    }
    const int rc = ::poll(fds, static_cast<nfds_t>(nfds), wait_ms);
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("poll: ") + std::strerror(errno), ErrorClass::put);
    }
    for (int i = 0; i < nfds; ++i) {
      if (fds[i].revents == 0) continue;
      if (fds[i].fd == to_child) {
        const ssize_t w = ::write(to_child, input.data() + written, input.size() - written);
        if (w > 0) written += static_cast<std::size_t>(w);
        if (w < 0 && errno != EAGAIN) written = input.size();  // child closed stdin
        if (written == input.size()) detail::close_fd(to_child);
      } else {
        const ssize_t r = ::read(fds[i].fd, buf, sizeof buf);
        if (r > 0) {
          (fds[i].fd == from_out ? res.out : res.err).append(buf, static_cast<std::size_t>(r));
        } else if (r == 0 || errno != EAGAIN) {
          if (fds[i].fd == from_out) {
            detail::close_fd(from_out);
          } else {
            detail::close_fd(from_err);
          }
        }
      }
    }
  }
  detail::close_fd(to_child);
  int status = 0;
  ::waitpid(pid, &status, 0);
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return res;
}

inline std::string run_put(const std::vector<std::string>& command, std::string_view input, double timeout_seconds) {
  auto r = run_process(command, input, timeout_seconds);
  if (r.exit_code != 0) throw PutFailure(r.exit_code, std::move(r.err));
  return std::move(r.out);
}

}  // namespace modelizer
