#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>

#include "internal.hpp"

namespace sciana {

using detail::ToolFailure;

namespace {

constexpr int kIsolationFailed = 121;

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "sciana-sandbox-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw ToolFailure("internal", "cannot create sandbox directory");
    path = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace

std::string ToolExecutor::sandbox_explorer(const Json& p) {
  if (!settings_.sandbox_enabled) throw ToolFailure("disabled", "sandbox_explorer is disabled by configuration");
  TempDir dir;
  write_file((dir.path / "main.py").string(), p["code"].get<std::string>());
  std::string notes;
  if (p.contains("dependencies") && !p["dependencies"].empty()) {
    notes = "note: the sandbox has no network, so dependencies were not installed\n";
  }

  int fds[2];
  if (pipe(fds) != 0) throw ToolFailure("internal", "pipe failed");
  const pid_t pid = fork();
  if (pid < 0) throw ToolFailure("internal", "fork failed");
  if (pid == 0) {
    close(fds[0]);
    dup2(fds[1], STDOUT_FILENO);
    dup2(fds[1], STDERR_FILENO);
    close(fds[1]);
    // A fresh network namespace leaves only a downed loopback device.
    if (unshare(CLONE_NEWUSER | CLONE_NEWNET) != 0) _exit(kIsolationFailed);
    const rlim_t mem = static_cast<rlim_t>(settings_.sandbox_memory_mb) << 20;
    rlimit as{mem, mem};
    setrlimit(RLIMIT_AS, &as);
    const rlim_t cpu = static_cast<rlim_t>(std::ceil(settings_.sandbox_wall_seconds));
    rlimit cpu_limit{cpu, cpu + 1};
    setrlimit(RLIMIT_CPU, &cpu_limit);
    rlimit files{64 << 20, 64 << 20};
    setrlimit(RLIMIT_FSIZE, &files);
    if (chdir(dir.path.c_str()) != 0) _exit(127);
    execlp(settings_.python.c_str(), settings_.python.c_str(), "-I", "main.py", static_cast<char*>(nullptr));
    _exit(127);
  }
  close(fds[1]);
  std::string output;
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::duration<double>(settings_.sandbox_wall_seconds);
  bool timed_out = false;
  char buf[4096];
  while (true) {
    const auto left =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count();
    if (left <= 0) {
      timed_out = true;
      break;
    }
    pollfd pfd{fds[0], POLLIN, 0};
    const int rc = poll(&pfd, 1, static_cast<int>(std::min<long long>(left, 200)));
    if (rc < 0) break;
    if (rc == 0) continue;
    const ssize_t n = read(fds[0], buf, sizeof buf);
    if (n <= 0) break;
    if (output.size() < settings_.payload_budget * 2) output.append(buf, static_cast<std::size_t>(n));
  }
  close(fds[0]);
  if (timed_out) kill(pid, SIGKILL);
  int status = 0;
  waitpid(pid, &status, 0);
  if (timed_out) {
    throw ToolFailure("timeout", "sandbox exceeded " + std::to_string(settings_.sandbox_wall_seconds) + " s");
  }
  if (WIFEXITED(status) && WEXITSTATUS(status) == kIsolationFailed) {
    throw ToolFailure("disabled", "network isolation is unavailable on this host, so the code was not run");
  }
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return notes + "exit_code: " + std::to_string(code) + "\n" + output;
}

}  // namespace sciana
