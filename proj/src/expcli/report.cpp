#include "grokkit/expcli/report.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "grokkit/errors.hpp"
#include "grokkit/util.hpp"

namespace grokkit::expcli {

namespace {

constexpr const char* kColumns[] = {"epoch",    "train_loss", "test_loss", "train_acc",
                                    "test_acc", "ntk_drift",  "r_W",       "wallclock_ms"};

std::string cell(const std::optional<double>& v) { return v ? format_real(*v) : std::string(); }

void write_text(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw FormatError("failed writing " + path.string());
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto c = line.find(',', start);
    out.push_back(line.substr(start, c == std::string::npos ? std::string::npos : c - start));
    if (c == std::string::npos) return out;
    start = c + 1;
  }
}

template <typename V>
V parse_cell(const std::string& s, std::size_t line, std::size_t col) {
  V v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("trace line " + std::to_string(line) + ", column " + kColumns[col] + ": cannot parse '" + s + "'");
  }
  return v;
}

}  // namespace

std::string trace_csv(const metrics::TrainingTrace& trace) {
  std::string out = std::string(kTraceHeader) + "\n";
  for (const auto& r : trace.records()) {
    out += std::to_string(r.epoch) + "," + format_real(r.train_loss) + "," + format_real(r.test_loss) + "," +
           format_real(r.train_acc) + "," + format_real(r.test_acc) + "," + cell(r.ntk_drift) + "," + cell(r.r_w) +
           "," + cell(r.wallclock_ms) + "\n";
  }
  return out;
}

void write_trace_csv(const metrics::TrainingTrace& trace, const std::filesystem::path& path) {
  write_text(trace_csv(trace), path);
}

metrics::TrainingTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open trace " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  for (std::size_t c = 0; c < std::size(kColumns); ++c) {
    if (c >= header.size() || header[c] != kColumns[c]) {
      throw FormatError(path.string() + ": column " + std::to_string(c + 1) + " should be '" + kColumns[c] + "', found '" +
                        (c < header.size() ? header[c] : std::string("<missing>")) + "'");
    }
  }
  if (header.size() != std::size(kColumns)) {
    throw FormatError(path.string() + ": unexpected extra column '" + header[std::size(kColumns)] + "'");
  }

  metrics::TrainingTrace trace;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != std::size(kColumns)) {
      throw FormatError(path.string() + ": line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(std::size(kColumns)));
    }
    metrics::TraceRecord r;
    r.epoch = parse_cell<int>(cells[0], lineno, 0);
    r.train_loss = parse_cell<double>(cells[1], lineno, 1);
    r.test_loss = parse_cell<double>(cells[2], lineno, 2);
    r.train_acc = parse_cell<double>(cells[3], lineno, 3);
    r.test_acc = parse_cell<double>(cells[4], lineno, 4);
    if (!cells[5].empty()) r.ntk_drift = parse_cell<double>(cells[5], lineno, 5);
    if (!cells[6].empty()) r.r_w = parse_cell<double>(cells[6], lineno, 6);
    if (!cells[7].empty()) r.wallclock_ms = parse_cell<double>(cells[7], lineno, 7);
    try {
      trace.append(r);
    } catch (const ArgumentError& e) {
      throw FormatError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return trace;
}

RunSummary summarize(const std::string& label, const metrics::TrainingTrace& trace, const models::ModelSpec& spec,
                     std::size_t parameters, std::size_t train_samples) {
  RunSummary s;
  s.label = label;
  s.status = trace.status;
  s.parameters = parameters;
  s.forward_flops = metrics::flops_estimate(spec).total();
  if (trace.empty()) return s;
  const auto& last = trace.back();
  s.epochs = last.epoch;
  s.final_train_loss = last.train_loss;
  s.final_test_loss = last.test_loss;
  s.final_train_acc = last.train_acc;
  s.final_test_acc = last.test_acc;
  for (const auto& r : trace.records()) s.best_test_acc = std::max(s.best_test_acc, r.test_acc);
  s.time_gap = metrics::time_gap(trace);
  s.training_flops = 3.0 * s.forward_flops * static_cast<double>(train_samples) * s.epochs;
  return s;
}

std::string format_summary(const RunSummary& s) {
  std::ostringstream out;
  const auto opt = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string("none"); };
  out << "label: " << s.label << "\n";
  out << "status: " << metrics::to_string(s.status) << "\n";
  out << "epochs: " << s.epochs << "\n";
  out << "final_train_loss: " << format_real(s.final_train_loss) << "\n";
  out << "final_test_loss: " << format_real(s.final_test_loss) << "\n";
  out << "final_train_acc: " << format_real(s.final_train_acc) << "\n";
  out << "final_test_acc: " << format_real(s.final_test_acc) << "\n";
  out << "best_test_acc: " << format_real(s.best_test_acc) << "\n";
  out << "train_95_epoch: " << opt(s.time_gap.epoch_train) << "\n";
  out << "test_95_epoch: " << opt(s.time_gap.epoch_test) << "\n";
  out << "time_gap: " << opt(s.time_gap.gap) << "\n";
  out << "inverse_time_gap: " << format_real(s.time_gap.reciprocal) << "\n";
  out << "forward_flops_per_sample: " << format_real(s.forward_flops) << "\n";
  out << "training_flops: " << format_real(s.training_flops) << "\n";
  out << "parameters: " << s.parameters << "\n";
  for (const auto& n : s.notes) out << "note: " << n << "\n";
  return out.str();
}

void write_summary(const RunSummary& s, const std::filesystem::path& path) { write_text(format_summary(s), path); }

}  // namespace grokkit::expcli
