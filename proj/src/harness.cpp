#include "tokrep/harness.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "tokrep/errors.hpp"

namespace tokrep {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Manifest and file plumbing
// ---------------------------------------------------------------------------

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw HarnessError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw HarnessError("cannot write " + path.string());
  out << content;
  if (!out) throw HarnessError("short write to " + path.string());
}

struct FileLines {
  std::vector<std::string> lines;
  bool trailing_newline = false;
};

FileLines split_file(const std::string& content) {
  FileLines f;
  f.trailing_newline = !content.empty() && content.back() == '\n';
  std::string body = content;
  if (f.trailing_newline) body.pop_back();
  size_t start = 0;
  while (start <= body.size()) {
    size_t nl = body.find('\n', start);
    if (nl == std::string::npos) {
      f.lines.push_back(body.substr(start));
      break;
    }
    f.lines.push_back(body.substr(start, nl - start));
    start = nl + 1;
  }
  if (content.empty()) f.lines.clear();
  return f;
}

std::string join_file(const FileLines& f) {
  std::string out;
  for (size_t i = 0; i < f.lines.size(); ++i) {
    if (i) out += '\n';
    out += f.lines[i];
  }
  if (f.trailing_newline) out += '\n';
  return out;
}

std::vector<std::string> split_hunk(const std::string& text) {
  // A patch is lines; one trailing newline does not add an empty line.
  std::string body = text;
  if (!body.empty() && body.back() == '\n') body.pop_back();
  std::vector<std::string> lines;
  size_t start = 0;
  while (start <= body.size()) {
    size_t nl = body.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(body.substr(start));
      break;
    }
    lines.push_back(body.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

}  // namespace

BugCase load_bug_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ConfigError("cannot open manifest: " + manifest_path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("manifest " + manifest_path.string() + ": " + e.what());
  }

  BugCase bug;
  try {
    bug.id = j.at("id").get<std::string>();
    bug.source_path = j.at("source_path").get<std::string>();
    bug.hunk_start = j.at("hunk_start").get<int>();
    bug.hunk_end = j.at("hunk_end").get<int>();
    bug.buggy_hunk = j.at("buggy_hunk").get<std::string>();
    bug.context_radius = j.at("context_radius").get<int>();
    bug.test_command = j.at("test_command").get<std::string>();
    bug.timeout_s = j.at("timeout_s").get<double>();
    if (j.contains("workdir"))
      bug.workdir = j.at("workdir").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError("manifest " + manifest_path.string() + ": " + e.what());
  }

  if (bug.workdir.empty())
    bug.workdir = fs::absolute(manifest_path).parent_path();
  else if (bug.workdir.is_relative())
    bug.workdir = fs::absolute(manifest_path).parent_path() / bug.workdir;

  if (bug.id.empty()) throw ConfigError("manifest: empty id");
  if (bug.hunk_start < 1 || bug.hunk_end < bug.hunk_start)
    throw ConfigError("manifest: bad hunk range");
  if (bug.context_radius < 0) throw ConfigError("manifest: bad context_radius");
  if (bug.test_command.empty()) throw ConfigError("manifest: empty test_command");
  if (!(bug.timeout_s > 0)) throw ConfigError("manifest: timeout_s must be positive");
  if (bug.source_path.is_absolute())
    throw ConfigError("manifest: source_path must be relative to workdir");

  const fs::path source = bug.workdir / bug.source_path;
  FileLines file = split_file(read_file(source));
  if (bug.hunk_end > static_cast<int>(file.lines.size()))
    throw ConfigError("manifest: hunk range exceeds " + source.string());
  std::string actual;
  for (int i = bug.hunk_start; i <= bug.hunk_end; ++i) {
    if (i > bug.hunk_start) actual += '\n';
    actual += file.lines[i - 1];
  }
  if (actual != bug.buggy_hunk)
    throw ConfigError("manifest: buggy_hunk does not match lines " +
                      std::to_string(bug.hunk_start) + ".." +
                      std::to_string(bug.hunk_end) + " of " + source.string());
  return bug;
}

// ---------------------------------------------------------------------------
// RepairHarness
// ---------------------------------------------------------------------------

RepairHarness::RepairHarness(HarnessConfig config) : cfg_(std::move(config)) {
  if (cfg_.sandbox_root.empty())
    cfg_.sandbox_root = fs::temp_directory_path() / "tokrep-sandbox";
}

PatchedTree RepairHarness::apply_patch(const BugCase& bug,
                                       const PatchText& patch) const {
  // Process-wide counter: trees from distinct harness instances sharing a
  // sandbox root must never collide either.
  static std::atomic<uint64_t> serial{0};
  std::ostringstream dir;
  dir << bug.id << "-" << ::getpid() << "-"
      << serial.fetch_add(1, std::memory_order_relaxed);
  const fs::path stage = cfg_.sandbox_root / dir.str();
  const fs::path tree = stage / "tree";

  std::error_code ec;
  fs::create_directories(tree, ec);
  if (ec) throw HarnessError("cannot create " + tree.string() + ": " + ec.message());
  fs::copy(bug.workdir, tree,
           fs::copy_options::recursive | fs::copy_options::copy_symlinks, ec);
  if (ec) throw HarnessError("cannot copy tree: " + ec.message());

  const fs::path source = tree / bug.source_path;
  FileLines file = split_file(read_file(source));
  if (bug.hunk_end > static_cast<int>(file.lines.size()))
    throw HarnessError("hunk range exceeds copied source " + source.string());

  std::vector<std::string> patched;
  patched.reserve(file.lines.size());
  patched.insert(patched.end(), file.lines.begin(),
                 file.lines.begin() + (bug.hunk_start - 1));
  for (std::string& line : split_hunk(patch.text))
    patched.push_back(std::move(line));
  patched.insert(patched.end(), file.lines.begin() + bug.hunk_end,
                 file.lines.end());

  FileLines out{std::move(patched), file.trailing_newline};
  PatchedTree result;
  result.root = tree;
  result.patched_source = join_file(out);
  write_file(source, result.patched_source);
  return result;
}

namespace {

// Pulls summary-worthy lines out of captured output. stderr is scanned
// before stdout; the first fallback is the first non-empty line.
std::string summarize(const std::string& err, const std::string& out,
                      const std::vector<std::string>& patterns, size_t limit) {
  std::string summary;
  auto scan = [&](const std::string& text) {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line) && summary.size() < limit) {
      for (const std::string& p : patterns) {
        if (line.find(p) != std::string::npos) {
          if (!summary.empty()) summary += '\n';
          summary += line;
          break;
        }
      }
    }
  };
  scan(err);
  scan(out);
  if (summary.empty()) {
    auto first_line = [](const std::string& text) -> std::string {
      std::istringstream is(text);
      std::string line;
      while (std::getline(is, line))
        if (!line.empty()) return line;
      return {};
    };
    summary = first_line(err);
    if (summary.empty()) summary = first_line(out);
  }
  if (summary.size() > limit) summary.resize(limit);
  return summary;
}

std::string read_capture(FILE* f) {
  std::string data;
  if (!f) return data;
  ::fflush(f);
  ::rewind(f);
  char buf[4096];
  size_t n;
  while ((n = ::fread(buf, 1, sizeof buf, f)) > 0) data.append(buf, n);
  return data;
}

}  // namespace

Feedback RepairHarness::run_tests(const BugCase& bug,
                                  const fs::path& tree_root) const {
  Feedback fb;
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  FILE* out_f = ::tmpfile();
  FILE* err_f = ::tmpfile();
  if (!out_f || !err_f) {
    if (out_f) ::fclose(out_f);
    if (err_f) ::fclose(err_f);
    fb.kind = FeedbackKind::HarnessError;
    fb.summary = "cannot allocate capture files";
    return fb;
  }

  // Scrubbed environment: allowlisted variables only.
  std::vector<std::string> env_store;
  for (const std::string& name : cfg_.env_allowlist) {
    if (const char* v = ::getenv(name.c_str()))
      env_store.push_back(name + "=" + v);
  }
  std::vector<char*> envp;
  for (std::string& s : env_store) envp.push_back(s.data());
  envp.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) {
    ::fclose(out_f);
    ::fclose(err_f);
    fb.kind = FeedbackKind::HarnessError;
    fb.summary = std::string("fork failed: ") + std::strerror(errno);
    return fb;
  }

  if (pid == 0) {
    // Child: own process group so the whole command tree can be killed.
    ::setpgid(0, 0);
    if (::chdir(tree_root.c_str()) != 0) ::_exit(127);
    int devnull = ::open("/dev/null", O_RDONLY);
    if (devnull >= 0) ::dup2(devnull, 0);
    ::dup2(::fileno(out_f), 1);
    ::dup2(::fileno(err_f), 2);
    const char* argv[] = {"sh", "-c", bug.test_command.c_str(), nullptr};
    ::execve("/bin/sh", const_cast<char* const*>(argv), envp.data());
    ::_exit(127);
  }

  ::setpgid(pid, pid);  // mirror the child's call; one of the two wins

  bool timed_out = false;
  int status = 0;
  for (;;) {
    const pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0 && errno != EINTR) {
      ::kill(-pid, SIGKILL);
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      ::fclose(out_f);
      ::fclose(err_f);
      fb.kind = FeedbackKind::HarnessError;
      fb.summary = std::string("waitpid failed: ") + std::strerror(errno);
      fb.duration_s = elapsed();
      return fb;
    }
    if (elapsed() >= bug.timeout_s) {
      timed_out = true;
      ::kill(-pid, SIGKILL);
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }

  fb.duration_s = elapsed();
  const std::string out_text = read_capture(out_f);
  const std::string err_text = read_capture(err_f);
  ::fclose(out_f);
  ::fclose(err_f);

  if (timed_out) {
    fb.kind = FeedbackKind::Timeout;
    fb.exit_code = -SIGKILL;
    std::ostringstream os;
    os << "test run killed after exceeding " << bug.timeout_s << " s";
    fb.summary = os.str();
    return fb;
  }

  if (WIFEXITED(status)) {
    const int code = WEXITSTATUS(status);
    fb.exit_code = code;
    if (code == 0) {
      fb.kind = FeedbackKind::Pass;
      return fb;
    }
    bool compile = false;
    for (const std::string& p : cfg_.compile_error_patterns) {
      if (err_text.find(p) != std::string::npos) {
        compile = true;
        break;
      }
    }
    fb.kind = compile ? FeedbackKind::CompileError : FeedbackKind::TestFailure;
    fb.summary = summarize(err_text, out_text, cfg_.summary_patterns,
                           cfg_.summary_limit_bytes);
    if (fb.summary.empty())
      fb.summary = "exit code " + std::to_string(code);
    return fb;
  }

  // Killed by a signal we did not send: the test crashed.
  fb.kind = FeedbackKind::TestFailure;
  fb.exit_code = WIFSIGNALED(status) ? -WTERMSIG(status) : -1;
  fb.summary = summarize(err_text, out_text, cfg_.summary_patterns,
                         cfg_.summary_limit_bytes);
  if (fb.summary.empty())
    fb.summary = "terminated by signal " + std::to_string(WTERMSIG(status));
  return fb;
}

Feedback RepairHarness::evaluate(const BugCase& bug,
                                 const PatchText& patch) const {
  PatchedTree tree = apply_patch(bug, patch);
  Feedback fb = run_tests(bug, tree.root);
  cleanup(tree);
  return fb;
}

Feedback RepairHarness::evaluate_original(const BugCase& bug) const {
  PatchText identity;
  identity.text = bug.buggy_hunk;
  identity.rule = ExtractionRule::WholeCompletion;
  return evaluate(bug, identity);
}

void RepairHarness::cleanup(const PatchedTree& tree) const {
  if (cfg_.keep_trees) return;
  std::error_code ec;
  fs::remove_all(tree.root.parent_path(), ec);
  // Cleanup failure is not worth failing a run over.
}

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kInitialTemplate =
    "You are repairing a bug. The following code is under suspicion:\n"
    "\n"
    "{code}\n"
    "\n"
    "Surrounding source context:\n"
    "\n"
    "{context}\n"
    "\n"
    "Observed test feedback:\n"
    "\n"
    "{feedback}\n"
    "\n"
    "Reply with the corrected replacement for the code above, inside a "
    "fenced code block.\n";

constexpr const char* kIterationTemplate =
    "You are repairing a bug. A previous attempt failed. The rejected "
    "patch was:\n"
    "\n"
    "{code}\n"
    "\n"
    "Surrounding source context:\n"
    "\n"
    "{context}\n"
    "\n"
    "Test feedback for the rejected patch:\n"
    "\n"
    "{feedback}\n"
    "\n"
    "Reply with a corrected replacement, inside a fenced code block.\n";

void substitute(std::string& text, const std::string& key,
                const std::string& value) {
  size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    text.replace(pos, key.size(), value);
    pos += value.size();
  }
}

}  // namespace

std::string RepairHarness::build_prompt(const BugCase& bug,
                                        const std::string& code,
                                        const Feedback& feedback,
                                        const std::string& template_id) const {
  if (feedback.kind == FeedbackKind::Pass)
    throw std::logic_error(
        "build_prompt called with passing feedback; the loop exits before "
        "prompting on a pass");

  std::string tpl;
  if (!cfg_.template_dir.empty()) {
    const fs::path path = cfg_.template_dir / (template_id + ".txt");
    std::ifstream in(path, std::ios::binary);
    if (!in)
      throw ConfigError("unknown prompt template '" + template_id +
                        "' (no " + path.string() + ")");
    std::ostringstream buf;
    buf << in.rdbuf();
    tpl = buf.str();
  } else if (template_id == "initial") {
    tpl = kInitialTemplate;
  } else if (template_id == "iteration") {
    tpl = kIterationTemplate;
  } else {
    throw ConfigError("unknown prompt template '" + template_id + "'");
  }

  // Context: the hunk plus context_radius lines on both sides, from the
  // original tree.
  FileLines file = split_file(read_file(bug.workdir / bug.source_path));
  const int lo = std::max(1, bug.hunk_start - bug.context_radius);
  const int hi = std::min(static_cast<int>(file.lines.size()),
                          bug.hunk_end + bug.context_radius);
  std::string context;
  for (int i = lo; i <= hi; ++i) {
    if (i > lo) context += '\n';
    context += file.lines[i - 1];
  }

  std::string fb_text = std::string(to_string(feedback.kind));
  if (!feedback.summary.empty()) fb_text += ": " + feedback.summary;

  substitute(tpl, "{code}", code);
  substitute(tpl, "{context}", context);
  substitute(tpl, "{feedback}", fb_text);
  return tpl;
}

}  // namespace tokrep
