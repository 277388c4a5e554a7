#include "barlab/bars.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "barlab/error.hpp"
#include "barlab/parallel.hpp"

namespace barlab {

namespace {

constexpr std::string_view kBarHeader =
    "symbol,date,minute,open,high,low,close,open_ts,high_ts,low_ts,close_ts,vwap,volume,"
    "dollar_volume,ticks";
constexpr int kFixedColumns = 15;
constexpr const char* kFormat = "bars-csv v1";

std::int64_t checked_mul_add(std::int64_t acc, std::int64_t a, std::int64_t b) {
  std::int64_t prod = 0;
  if (__builtin_mul_overflow(a, b, &prod) || __builtin_add_overflow(acc, prod, &acc))
    throw ValidationError("bar notional overflows 64 bits");
  return acc;
}

struct MinuteState {
  Bar bar;
  bool has_included = false;
};

}  // namespace

double vwap_from(std::int64_t notional, std::int64_t volume) {
  return static_cast<double>(notional) / static_cast<double>(volume) /
         static_cast<double>(Price::kScale);
}

double dollars_from(std::int64_t notional) {
  return static_cast<double>(notional) / static_cast<double>(Price::kScale);
}

std::vector<Bar> build_bars(std::span<const Tick> ticks, const BarBuildConfig& cfg) {
  const SessionSpec& s = cfg.session;
  std::vector<Bar> out;
  if (ticks.empty()) return out;

  MinuteState cur;
  int cur_minute = -1;
  auto flush = [&] {
    if (cur_minute >= 0 && cur.has_included) {
      Bar& b = cur.bar;
      b.vwap = vwap_from(b.notional, b.volume);
      b.dollar_volume = dollars_from(b.notional);
      out.push_back(std::move(b));
    }
    cur = MinuteState{};
  };

  Nanos prev_ts = std::numeric_limits<Nanos>::min();
  for (const Tick& t : ticks) {
    if (t.ts < prev_ts) throw ContractViolation("build_bars: ticks not sorted by ts");
    prev_ts = t.ts;
    if (t.ts < s.session_open || t.ts >= s.session_close())
      throw ContractViolation("build_bars: tick outside session");
    if (t.symbol != ticks.front().symbol || t.day != ticks.front().day)
      throw ContractViolation("build_bars: partition mixes symbols or days");

    const int minute = static_cast<int>((t.ts - s.session_open) / s.bar_width);
    if (minute != cur_minute) {
      flush();
      cur_minute = minute;
      cur.bar.symbol = t.symbol;
      cur.bar.day = t.day;
      cur.bar.minute = minute;
    }
    Bar& b = cur.bar;
    if (!t.code.empty()) {
      CodeCount& cc = b.per_code[t.code];
      cc.volume += t.size;
      cc.ticks += 1;
    }
    if (cfg.excluded_codes.contains(t.code)) continue;

    if (!cur.has_included) {
      cur.has_included = true;
      b.open = b.high = b.low = b.close = t.price;
      b.open_ts = b.high_ts = b.low_ts = b.close_ts = t.ts;
    } else {
      // strict comparisons keep the first occurrence of the extreme
      if (t.price > b.high) {
        b.high = t.price;
        b.high_ts = t.ts;
      }
      if (t.price < b.low) {
        b.low = t.price;
        b.low_ts = t.ts;
      }
      b.close = t.price;
      b.close_ts = t.ts;
    }
    b.notional = checked_mul_add(b.notional, t.price.ticks, t.size);
    b.volume += t.size;
    b.tick_count += 1;
  }
  flush();
  return out;
}

std::vector<std::vector<Bar>> build_all_bars(std::span<const TickPartition> parts,
                                             const BarBuildConfig& cfg) {
  std::vector<std::vector<Bar>> out(parts.size());
  parallel::for_each_index(parts.size(),
                           [&](std::size_t i) { out[i] = build_bars(parts[i].ticks, cfg); });
  return out;
}

namespace reference {

std::vector<std::vector<Bar>> build_all_bars(std::span<const TickPartition> parts,
                                             const BarBuildConfig& cfg) {
  std::vector<std::vector<Bar>> out;
  out.reserve(parts.size());
  for (const auto& p : parts) out.push_back(build_bars(p.ticks, cfg));
  return out;
}

}  // namespace reference

std::string bar_file_name(const std::string& symbol, Date day) {
  return symbol + "_" + format_date(day) + ".bars.csv";
}

namespace {

std::string notional_str(std::int64_t notional) { return Price{notional}.str(); }

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

template <class Int>
Int to_int(std::string_view s, const std::string& file, std::size_t line, const char* what) {
  Int v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
    throw ParseError(file, line, std::string("bad ") + what);
  return v;
}

Price to_price(std::string_view s, const std::string& file, std::size_t line, const char* what) {
  Price p;
  if (!parse_price(s, p)) throw ParseError(file, line, std::string("bad ") + what);
  return p;
}

}  // namespace

void write_bars(const std::filesystem::path& path, std::span<const Bar> bars) {
  std::set<std::string> codes;
  for (const Bar& b : bars)
    for (const auto& [code, _] : b.per_code) codes.insert(code);

  std::string buf;
  buf.append(kBarHeader);
  for (const auto& c : codes) buf.append(",vol[").append(c).append("],ticks[").append(c).append("]");
  buf.push_back('\n');
  char vw[64];
  for (const Bar& b : bars) {
    std::snprintf(vw, sizeof vw, "%.8f", b.vwap);
    buf.append(b.symbol).push_back(',');
    buf.append(format_date(b.day)).push_back(',');
    buf.append(std::to_string(b.minute)).push_back(',');
    buf.append(b.open.str()).push_back(',');
    buf.append(b.high.str()).push_back(',');
    buf.append(b.low.str()).push_back(',');
    buf.append(b.close.str()).push_back(',');
    buf.append(std::to_string(b.open_ts)).push_back(',');
    buf.append(std::to_string(b.high_ts)).push_back(',');
    buf.append(std::to_string(b.low_ts)).push_back(',');
    buf.append(std::to_string(b.close_ts)).push_back(',');
    buf.append(vw).push_back(',');
    buf.append(std::to_string(b.volume)).push_back(',');
    buf.append(notional_str(b.notional)).push_back(',');
    buf.append(std::to_string(b.tick_count));
    for (const auto& c : codes) {
      buf.push_back(',');
      auto it = b.per_code.find(c);
      if (it != b.per_code.end()) buf.append(std::to_string(it->second.volume));
      buf.push_back(',');
      if (it != b.per_code.end()) buf.append(std::to_string(it->second.ticks));
    }
    buf.push_back('\n');
  }
  write_file_atomic(path, buf);
}

std::vector<Bar> read_bars(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string file = path.filename().string();
  std::string line;
  if (!std::getline(in, line)) throw FormatError(std::string(kFormat) + ": missing header in " + file);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = split(line);
  const auto fixed = split(kBarHeader);
  if (header.size() < fixed.size() || (header.size() - fixed.size()) % 2 != 0)
    throw FormatError(std::string(kFormat) + ": unexpected header in " + file);
  for (std::size_t i = 0; i < fixed.size(); ++i)
    if (header[i] != fixed[i])
      throw FormatError(std::string(kFormat) + ": column " + std::to_string(i) + " should be '" +
                        std::string(fixed[i]) + "' in " + file);
  std::vector<std::string> codes;
  for (std::size_t i = fixed.size(); i < header.size(); i += 2) {
    const std::string_view v = header[i];
    const std::string_view t = header[i + 1];
    if (!v.starts_with("vol[") || !v.ends_with("]") || !t.starts_with("ticks[") || !t.ends_with("]"))
      throw FormatError(std::string(kFormat) + ": bad per-code columns in " + file);
    const std::string code(v.substr(4, v.size() - 5));
    if (code != t.substr(6, t.size() - 7))
      throw FormatError(std::string(kFormat) + ": mismatched per-code pair in " + file);
    codes.push_back(code);
  }

  std::vector<Bar> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size()) throw ParseError(file, lineno, "wrong field count");
    Bar b;
    b.symbol = std::string(f[0]);
    try {
      b.day = parse_date(f[1]);
    } catch (const ValidationError&) {
      throw ParseError(file, lineno, "bad date");
    }
    b.minute = to_int<int>(f[2], file, lineno, "minute");
    b.open = to_price(f[3], file, lineno, "open");
    b.high = to_price(f[4], file, lineno, "high");
    b.low = to_price(f[5], file, lineno, "low");
    b.close = to_price(f[6], file, lineno, "close");
    b.open_ts = to_int<Nanos>(f[7], file, lineno, "open_ts");
    b.high_ts = to_int<Nanos>(f[8], file, lineno, "high_ts");
    b.low_ts = to_int<Nanos>(f[9], file, lineno, "low_ts");
    b.close_ts = to_int<Nanos>(f[10], file, lineno, "close_ts");
    b.volume = to_int<std::int64_t>(f[12], file, lineno, "volume");
    b.notional = to_price(f[13], file, lineno, "dollar_volume").ticks;
    b.tick_count = to_int<std::int64_t>(f[14], file, lineno, "ticks");
    if (b.volume <= 0) throw ParseError(file, lineno, "volume must be > 0");
    b.vwap = vwap_from(b.notional, b.volume);
    b.dollar_volume = dollars_from(b.notional);
    double printed = 0.0;
    {
      const std::string s(f[11]);
      char* end = nullptr;
      printed = std::strtod(s.c_str(), &end);
      if (s.empty() || *end != '\0') throw ParseError(file, lineno, "bad vwap");
    }
    if (std::fabs(printed - b.vwap) > 1e-8 * std::max(1.0, std::fabs(b.vwap)))
      throw FormatError(std::string(kFormat) + ": vwap column disagrees with dollar_volume/volume at " +
                        file + ":" + std::to_string(lineno));
    for (std::size_t c = 0; c < codes.size(); ++c) {
      const auto v = f[kFixedColumns + 2 * c];
      const auto t = f[kFixedColumns + 2 * c + 1];
      if (v.empty() != t.empty()) throw ParseError(file, lineno, "half-empty per-code pair");
      if (v.empty()) continue;
      b.per_code[codes[c]] = {to_int<std::int64_t>(v, file, lineno, "per-code volume"),
                              to_int<std::int64_t>(t, file, lineno, "per-code ticks")};
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace barlab
