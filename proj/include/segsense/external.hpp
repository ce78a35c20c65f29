#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "segsense/errors.hpp"
#include "segsense/image_io.hpp"

namespace segsense {

/// Ids handed to an external predictor, plus where their rasters live.
struct Manifest {
  std::vector<std::string> ids;
  fs::path mask_dir;
  fs::path image_dir;
};

inline nlohmann::json to_json(const Manifest& m) {
  return {{"ids", m.ids}, {"mask_dir", m.mask_dir.string()}, {"image_dir", m.image_dir.string()}};
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  try {
    return {j.at("ids").get<std::vector<std::string>>(), j.value("mask_dir", std::string{}),
            j.value("image_dir", std::string{})};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
}

enum class ExternalFailure { spawn, nonzero_exit, timeout, missing_prediction, extra_prediction };

inline std::string failure_name(ExternalFailure f) {
  switch (f) {
    case ExternalFailure::spawn: return "spawn";
    case ExternalFailure::nonzero_exit: return "nonzero_exit";
    case ExternalFailure::timeout: return "timeout";
    case ExternalFailure::missing_prediction: return "missing_prediction";
    case ExternalFailure::extra_prediction: return "extra_prediction";
  }
  return "unknown";
}

class ExternalPredictorError : public PredictorError {
 public:
  ExternalPredictorError(ExternalFailure reason, const std::string& what)
      : PredictorError(failure_name(reason) + ": " + what), reason_(reason) {}
  ExternalFailure reason() const noexcept { return reason_; }

 private:
  ExternalFailure reason_;
};

struct ExternalInvocation {
  std::string command_template;
  fs::path workdir;
  Manifest train;
  Manifest test;
  std::uint64_t seed = 0;
  int epochs = 100;
  std::chrono::milliseconds timeout{std::chrono::minutes(30)};
};

/// Replaces every {name} placeholder with its value.
inline std::string substitute(std::string text, const std::vector<std::pair<std::string, std::string>>& vars) {
  for (const auto& [key, value] : vars) {
    const std::string token = "{" + key + "}";
    for (std::size_t pos = text.find(token); pos != std::string::npos;
         pos = text.find(token, pos + value.size())) {
      text.replace(pos, token.size(), value);
    }
  }
  return text;
}

namespace detail {

/// Runs `sh -c command` with output appended to `log`. Returns the exit
/// status, or -1 after killing the process group on timeout.
inline int run_shell(const std::string& command, const fs::path& log, std::chrono::milliseconds timeout) {
  const pid_t pid = fork();
  if (pid < 0) throw ExternalPredictorError(ExternalFailure::spawn, "fork failed");
  if (pid == 0) {
    setpgid(0, 0);
    const int fd = open(log.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd >= 0) {
      dup2(fd, STDOUT_FILENO);
      dup2(fd, STDERR_FILENO);
      close(fd);
    }
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    int status = 0;
    const pid_t r = waitpid(pid, &status, WNOHANG);
    if (r == pid) {
      if (WIFEXITED(status)) return WEXITSTATUS(status);
      return 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
    }
    if (std::chrono::steady_clock::now() >= deadline) {
      kill(-pid, SIGKILL);
      waitpid(pid, &status, 0);
      return -1;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

inline std::string tail_of(const fs::path& log, std::size_t max_bytes = 400) {
  std::ifstream in(log, std::ios::binary);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.size() > max_bytes) text = "..." + text.substr(text.size() - max_bytes);
  return text;
}

}  // namespace detail

/// Writes the manifests, runs the predictor command and checks that exactly
/// one prediction raster per test id landed in `<workdir>/predictions`.
/// Placeholders: {train_manifest} {test_manifest} {out_dir} {seed} {epochs}.
inline fs::path run_external(const ExternalInvocation& inv) {
  if (inv.command_template.find("{out_dir}") == std::string::npos ||
      inv.command_template.find("{test_manifest}") == std::string::npos) {
    throw UsageError("external command template must reference {out_dir} and {test_manifest}");
  }
  fs::create_directories(inv.workdir);
  const fs::path out_dir = inv.workdir / "predictions";
  fs::remove_all(out_dir);
  fs::create_directories(out_dir);
  const fs::path train_manifest = inv.workdir / "train_manifest.json";
  const fs::path test_manifest = inv.workdir / "test_manifest.json";
  std::ofstream(train_manifest) << to_json(inv.train).dump(2) << '\n';
  std::ofstream(test_manifest) << to_json(inv.test).dump(2) << '\n';

  const std::string command =
      substitute(inv.command_template, {{"train_manifest", train_manifest.string()},
                                        {"test_manifest", test_manifest.string()},
                                        {"out_dir", out_dir.string()},
                                        {"seed", std::to_string(inv.seed)},
                                        {"epochs", std::to_string(inv.epochs)}});
  const fs::path log = inv.workdir / "predictor.log";
  const int status = detail::run_shell(command, log, inv.timeout);
  if (status == -1) {
    throw ExternalPredictorError(ExternalFailure::timeout,
                                 "predictor exceeded " + std::to_string(inv.timeout.count()) + " ms");
  }
  if (status != 0) {
    throw ExternalPredictorError(ExternalFailure::nonzero_exit,
                                 "predictor exited with code " + std::to_string(status) + "; output: " +
                                     detail::tail_of(log));
  }

  std::set<std::string> expected(inv.test.ids.begin(), inv.test.ids.end());
  std::set<std::string> found;
  for (const auto& entry : fs::directory_iterator(out_dir)) {
    if (!entry.is_regular_file() || !is_raster_path(entry.path())) continue;
    const std::string id = entry.path().stem().string();
    if (!expected.count(id)) {
      throw ExternalPredictorError(ExternalFailure::extra_prediction, "unexpected prediction '" + id + "'");
    }
    if (!found.insert(id).second) {
      throw ExternalPredictorError(ExternalFailure::extra_prediction, "duplicate prediction for '" + id + "'");
    }
  }
  for (const auto& id : inv.test.ids) {
    if (!found.count(id)) {
      throw ExternalPredictorError(ExternalFailure::missing_prediction, "no prediction for '" + id + "'");
    }
  }
  return out_dir;
}

/// Prediction raster for `id` in `dir`, whichever supported extension it has.
inline fs::path prediction_path(const fs::path& dir, const std::string& id) {
  for (const char* ext : {".png", ".pgm"}) {
    fs::path p = dir / (id + ext);
    if (fs::exists(p)) return p;
  }
  throw ExternalPredictorError(ExternalFailure::missing_prediction, "no prediction for '" + id + "'");
}

}  // namespace segsense
