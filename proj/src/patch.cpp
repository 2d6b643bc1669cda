#include "tokrep/patch.hpp"

#include <cctype>
#include <string_view>
#include <vector>

#include "tokrep/errors.hpp"

namespace tokrep {

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  size_t start = 0;
  while (start <= text.size()) {
    size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

bool is_fence_line(std::string_view line) {
  size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  return line.substr(i).rfind("```", 0) == 0;
}

std::string strip(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

PatchText extract_patch(const std::string& completion,
                        const std::string& origin_candidate) {
  PatchText out;
  out.origin_candidate = origin_candidate;

  const auto lines = split_lines(completion);
  size_t open = lines.size();
  for (size_t i = 0; i < lines.size(); ++i) {
    if (is_fence_line(lines[i])) {
      open = i;
      break;
    }
  }

  if (open < lines.size()) {
    out.rule = ExtractionRule::FencedBlock;
    std::string body;
    bool first = true;
    for (size_t i = open + 1; i < lines.size(); ++i) {
      if (is_fence_line(lines[i])) break;
      if (!first) body += '\n';
      body += std::string(lines[i]);
      first = false;
    }
    out.text = std::move(body);
  } else {
    out.rule = ExtractionRule::WholeCompletion;
    out.text = strip(completion);
  }

  if (strip(out.text).empty())
    throw NoPatchInCompletion("completion contains no patch text" +
                              (origin_candidate.empty()
                                   ? std::string()
                                   : " (candidate " + origin_candidate + ")"));
  return out;
}

const char* to_string(ExtractionRule rule) {
  switch (rule) {
    case ExtractionRule::FencedBlock:
      return "fenced_block";
    case ExtractionRule::WholeCompletion:
      return "whole_completion";
  }
  return "unknown";
}

}  // namespace tokrep
