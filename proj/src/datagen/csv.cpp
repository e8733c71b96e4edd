#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "pvfd/datagen.hpp"
#include "pvfd/error.hpp"

namespace pvfd::datagen {

namespace {

constexpr std::chrono::sys_days kEpoch{std::chrono::year{2011} / 1 / 1};
constexpr const char* kIrrHeader = "date,slot,dhi,dni,ghi";

std::string format(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string where(const std::filesystem::path& file, std::size_t line, std::size_t column = 0) {
  std::string s = file.filename().string() + " line " + std::to_string(line);
  if (column > 0) s += " column " + std::to_string(column);
  return s;
}

double parse_value(std::string_view field, const std::string& at) {
  double v = 0.0;
  const auto r = std::from_chars(field.data(), field.data() + field.size(), v);
  if (r.ec != std::errc() || r.ptr != field.data() + field.size()) {
    throw ParseError(at + ": not a number '" + std::string(field) + "'");
  }
  if (!std::isfinite(v) || v < 0.0) {
    throw ParseError(at + ": value must be finite and nonnegative");
  }
  return v;
}

std::uint64_t parse_index(std::string_view field, const std::string& at) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(field.data(), field.data() + field.size(), v);
  if (r.ec != std::errc() || r.ptr != field.data() + field.size()) {
    throw ParseError(at + ": not a nonnegative integer '" + std::string(field) + "'");
  }
  return v;
}

std::uint32_t parse_date(std::string_view field, const std::string& at) {
  try {
    return day_of(std::string(field));
  } catch (const ParseError& e) {
    throw ParseError(at + ": " + e.what());
  }
}

// Strips a trailing '\r' so files written on other platforms read the same.
bool next_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

std::string generation_header(std::size_t slots) {
  std::string h = "prosumer_id,date";
  char buf[24];
  for (std::size_t t = 0; t < slots; ++t) {
    std::snprintf(buf, sizeof buf, ",s%02zu", t);
    h += buf;
  }
  return h;
}

}  // namespace

std::string date_of(std::uint32_t day_index) {
  const std::chrono::year_month_day ymd{kEpoch + std::chrono::days{day_index}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::uint32_t day_of(const std::string& date) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (date.size() != 10 || std::sscanf(date.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) {
    throw ParseError("date '" + date + "' is not YYYY-MM-DD");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y} / m / d};
  if (!ymd.ok()) throw ParseError("date '" + date + "' does not exist");
  const auto diff = (std::chrono::sys_days{ymd} - kEpoch).count();
  if (diff < 0) throw ParseError("date '" + date + "' precedes " + date_of(0));
  return static_cast<std::uint32_t>(diff);
}

void write_csv(std::span<const ProsumerDay> days, const std::filesystem::path& generation,
               const std::filesystem::path& irradiance) {
  const std::size_t slots = days.empty() ? 48 : days.front().pvg_reported.size();
  std::map<std::uint32_t, const Tensor*> weather;
  std::ofstream gen(generation);
  if (!gen) throw ParseError("cannot open " + generation.string() + " for writing");
  gen << generation_header(slots) << '\n';
  for (const auto& d : days) {
    if (d.pvg_reported.size() != slots || d.irr.rank() != 2 || d.irr.dim(0) != slots ||
        d.irr.dim(1) != 3) {
      throw DimensionError("write_csv: prosumer " + std::to_string(d.prosumer_id) + " day " +
                           std::to_string(d.day_index) + " has inconsistent slot count");
    }
    const auto [it, fresh] = weather.emplace(d.day_index, &d.irr);
    if (!fresh && !(*it->second == d.irr)) {
      throw ConfigError("write_csv: day " + std::to_string(d.day_index) +
                        " carries two different irradiance series");
    }
    gen << d.prosumer_id << ',' << date_of(d.day_index);
    for (const double v : d.pvg_reported) gen << ',' << format(v);
    gen << '\n';
  }
  std::ofstream irr(irradiance);
  if (!irr) throw ParseError("cannot open " + irradiance.string() + " for writing");
  irr << kIrrHeader << '\n';
  for (const auto& [day, t] : weather) {
    const std::string date = date_of(day);
    for (std::size_t s = 0; s < slots; ++s) {
      irr << date << ',' << s << ',' << format(t->at(s, 0)) << ',' << format(t->at(s, 1)) << ','
          << format(t->at(s, 2)) << '\n';
    }
  }
}

std::vector<ProsumerDay> ingest_csv(const std::filesystem::path& generation,
                                    const std::filesystem::path& irradiance, std::size_t slots) {
  std::ifstream gen(generation);
  if (!gen) throw ParseError("cannot open " + generation.string());
  std::string line;
  if (!next_line(gen, line)) return {};
  if (line != generation_header(slots)) {
    throw ParseError(where(generation, 1) + ": header must be " + generation_header(slots));
  }

  struct Row {
    std::size_t line;
    std::uint32_t prosumer, day;
    std::vector<double> values;
  };
  std::vector<Row> rows;
  for (std::size_t n = 2; next_line(gen, line); ++n) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != slots + 2) {
      throw ParseError(where(generation, n) + ": expected " + std::to_string(slots) +
                       " generation slots, found " +
                       std::to_string(f.size() >= 2 ? f.size() - 2 : 0));
    }
    Row r{n, static_cast<std::uint32_t>(parse_index(f[0], where(generation, n, 1))),
          parse_date(f[1], where(generation, n, 2)), std::vector<double>(slots)};
    for (std::size_t t = 0; t < slots; ++t) r.values[t] = parse_value(f[t + 2], where(generation, n, t + 3));
    rows.push_back(std::move(r));
  }
  if (rows.empty()) return {};

  std::ifstream irr_in(irradiance);
  if (!irr_in) throw ParseError("cannot open " + irradiance.string());
  if (!next_line(irr_in, line) || line != kIrrHeader) {
    throw ParseError(where(irradiance, 1) + ": header must be " + kIrrHeader);
  }
  struct Day {
    Tensor irr;
    std::vector<bool> seen;
  };
  std::map<std::uint32_t, Day> weather;
  for (std::size_t n = 2; next_line(irr_in, line); ++n) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 5) {
      throw ParseError(where(irradiance, n) + ": expected 5 columns, found " +
                       std::to_string(f.size()));
    }
    const auto day = parse_date(f[0], where(irradiance, n, 1));
    const auto slot = parse_index(f[1], where(irradiance, n, 2));
    if (slot >= slots) {
      throw ParseError(where(irradiance, n, 2) + ": slot " + std::to_string(slot) +
                       " out of range");
    }
    auto [it, fresh] = weather.try_emplace(day);
    if (fresh) it->second = Day{Tensor({slots, 3}), std::vector<bool>(slots, false)};
    if (it->second.seen[slot]) {
      throw ParseError(where(irradiance, n) + ": duplicate slot " + std::to_string(slot));
    }
    it->second.seen[slot] = true;
    for (std::size_t c = 0; c < 3; ++c) {
      it->second.irr.at(slot, c) = parse_value(f[c + 2], where(irradiance, n, c + 3));
    }
  }

  std::vector<ProsumerDay> out;
  out.reserve(rows.size());
  for (auto& r : rows) {
    const auto it = weather.find(r.day);
    if (it == weather.end() ||
        std::find(it->second.seen.begin(), it->second.seen.end(), false) != it->second.seen.end()) {
      throw ParseError(where(generation, r.line) + ": no complete irradiance for " +
                       date_of(r.day));
    }
    ProsumerDay d;
    d.prosumer_id = r.prosumer;
    d.day_index = r.day;
    d.pvg_actual = r.values;
    d.pvg_reported = std::move(r.values);
    d.irr = it->second.irr;
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace pvfd::datagen
