#include "barlab/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "barlab/error.hpp"
#include "barlab/parallel.hpp"

namespace barlab {

namespace {

constexpr std::string_view kTickHeader = "symbol,date,ts_ns,price,size,code";

std::uint64_t partition_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b + 0x632BE59BD9B4E019ULL));
}

std::vector<std::string_view> split_csv(std::string_view line) {
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
bool parse_int(std::string_view s, Int& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace

Price Price::from_double(double v) {
  return Price{static_cast<std::int64_t>(std::llround(v * kScale))};
}

std::string Price::str() const {
  const std::int64_t whole = ticks / kScale;
  const std::int64_t frac = ticks % kScale;
  char buf[40];
  if (ticks < 0) {
    std::snprintf(buf, sizeof buf, "-%lld.%04lld", static_cast<long long>(-whole),
                  static_cast<long long>(-frac));
  } else {
    std::snprintf(buf, sizeof buf, "%lld.%04lld", static_cast<long long>(whole),
                  static_cast<long long>(frac));
  }
  return buf;
}

bool parse_price(std::string_view text, Price& out) {
  if (text.empty()) return false;
  bool neg = false;
  if (text.front() == '-') {
    neg = true;
    text.remove_prefix(1);
  }
  const auto dot = text.find('.');
  std::string_view whole = text.substr(0, dot);
  std::string_view frac = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
  if (whole.empty() || frac.size() > 4) return false;
  if (dot != std::string_view::npos && frac.empty()) return false;
  std::int64_t w = 0;
  if (!parse_int(whole, w) || w < 0) return false;
  std::int64_t f = 0;
  if (!frac.empty()) {
    if (!parse_int(frac, f) || f < 0) return false;
    for (std::size_t i = frac.size(); i < 4; ++i) f *= 10;
  }
  out.ticks = (w * Price::kScale + f) * (neg ? -1 : 1);
  return true;
}

void SessionSpec::validate() const {
  if (minutes_per_day < 1) throw ConfigError("session: minutesPerDay must be >= 1");
  if (bar_width <= 0) throw ConfigError("session: barWidth must be > 0");
  if (session_open < 0 || session_close() > 24LL * 3600 * kNanosPerSecond)
    throw ConfigError("session: must fit within one calendar day");
}

std::string tick_file_name(const std::string& symbol, Date day) {
  return symbol + "_" + format_date(day) + ".ticks.csv";
}

std::vector<TickPartition> read_ticks(const std::filesystem::path& path,
                                      const SessionSpec& session) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string file = path.filename().string();
  std::map<std::pair<std::string, Date>, std::vector<Tick>> groups;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != kTickHeader) throw ParseError(file, lineno, "expected header '" + std::string(kTickHeader) + "'");
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 6) throw ParseError(file, lineno, "expected 6 fields");
    Tick t;
    t.symbol = std::string(f[0]);
    if (t.symbol.empty()) throw ParseError(file, lineno, "empty symbol");
    try {
      t.day = parse_date(f[1]);
    } catch (const ValidationError&) {
      throw ParseError(file, lineno, "bad date");
    }
    if (!parse_int(f[2], t.ts)) throw ParseError(file, lineno, "bad ts_ns");
    if (!parse_price(f[3], t.price)) throw ParseError(file, lineno, "bad price");
    if (!parse_int(f[4], t.size)) throw ParseError(file, lineno, "bad size");
    t.code = std::string(f[5]);
    if (t.price.ticks <= 0)
      throw ValidationError(file + ":" + std::to_string(lineno) + ": price must be > 0");
    if (t.size <= 0)
      throw ValidationError(file + ":" + std::to_string(lineno) + ": size must be > 0");
    if (t.ts < session.session_open || t.ts >= session.session_close())
      throw ValidationError(file + ":" + std::to_string(lineno) + ": ts outside session");
    groups[{t.symbol, t.day}].push_back(std::move(t));
  }
  std::vector<TickPartition> out;
  out.reserve(groups.size());
  for (auto& [key, ticks] : groups) {
    std::stable_sort(ticks.begin(), ticks.end(),
                     [](const Tick& a, const Tick& b) { return a.ts < b.ts; });
    out.push_back({key.first, key.second, std::move(ticks)});
  }
  return out;
}

void write_ticks(const std::filesystem::path& path, const std::vector<Tick>& ticks) {
  std::string buf;
  buf.reserve(ticks.size() * 48 + 64);
  buf.append(kTickHeader);
  buf.push_back('\n');
  std::string date_cache;
  Date cached_day{};
  for (const Tick& t : ticks) {
    if (date_cache.empty() || t.day != cached_day) {
      cached_day = t.day;
      date_cache = format_date(t.day);
    }
    buf.append(t.symbol).push_back(',');
    buf.append(date_cache).push_back(',');
    buf.append(std::to_string(t.ts)).push_back(',');
    buf.append(t.price.str()).push_back(',');
    buf.append(std::to_string(t.size)).push_back(',');
    buf.append(t.code).push_back('\n');
  }
  write_file_atomic(path, buf);
}

void SynthConfig::validate(const SessionSpec& session) const {
  auto fail = [](const std::string& m) { throw ConfigError("synth: " + m); };
  if (symbols < 1 || days < 1) fail("symbols and days must be >= 1");
  if (!(base_price_low > 0.0 && base_price_high >= base_price_low)) fail("bad base price range");
  if (!(minute_vol > 0.0)) fail("minuteVol must be > 0");
  if (symbol_vol_sd < 0.0 || day_vol_sd < 0.0) fail("symbolVolSd and dayVolSd must be >= 0");
  if (drift_shock < 0.0) fail("driftShock must be >= 0");
  if (std::fabs(drift_phi) >= 1.0) fail("|driftPhi| must be < 1");
  if (!vol_curve.empty() && static_cast<int>(vol_curve.size()) != session.minutes_per_day)
    fail("volCurve length must equal minutesPerDay");
  for (double c : vol_curve)
    if (!(c > 0.0)) fail("volCurve entries must be > 0");
  if (tick_base < 1) fail("tickBase must be >= 1");
  if (tick_lambda < 0.0) fail("tickLambda must be >= 0");
  if (!(tick_nu > 2.0)) fail("tickNu must be > 2");
  if (tick_noise_scale < 0.0) fail("tickNoiseScale must be >= 0");
  if (off_exchange_fraction < 0.0 || off_exchange_fraction > 1.0)
    fail("offExchangeFraction must lie in [0, 1]");
  if (!(size_log_sd > 0.0)) fail("sizeLogSd must be > 0");
  parse_date(first_day);
}

std::vector<double> SynthConfig::curve(const SessionSpec& session) const {
  if (!vol_curve.empty()) return vol_curve;
  const int n = session.minutes_per_day;
  std::vector<double> c(static_cast<std::size_t>(n));
  for (int m = 0; m < n; ++m) {
    const double x = n > 1 ? 2.0 * m / (n - 1) - 1.0 : 0.0;  // -1 at open, +1 at close
    c[static_cast<std::size_t>(m)] = 0.8 + 0.6 * x * x;
  }
  return c;
}

std::string synth_symbol(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "S%03d", index);
  return buf;
}

std::vector<Date> synth_days(const SynthConfig& cfg) {
  return business_days(parse_date(cfg.first_day), cfg.days);
}

namespace {

struct MinuteSummary {
  double log_return = 0.0;     // ln(close / open)
  double close_fraction = 0.5;
  double time_diff = 0.0;      // (highTs - lowTs) / barWidth
  Price vwap;
};

// Realized bar quantities over the regular (code-less) ticks of one minute,
// matching what the bar builder reports under the default exclusion set.
MinuteSummary summarize_minute(const std::vector<Tick>& ticks, std::size_t begin,
                               std::size_t end, Nanos width) {
  MinuteSummary s;
  const Tick* first = nullptr;
  const Tick* last = nullptr;
  const Tick* hi = nullptr;
  const Tick* lo = nullptr;
  std::int64_t notional = 0;
  std::int64_t volume = 0;
  for (std::size_t i = begin; i < end; ++i) {
    const Tick& t = ticks[i];
    if (!t.code.empty()) continue;
    if (!first) first = &t;
    last = &t;
    if (!hi || t.price > hi->price) hi = &t;
    if (!lo || t.price < lo->price) lo = &t;
    notional += t.price.ticks * t.size;
    volume += t.size;
  }
  if (!first) return s;
  s.log_return = std::log(last->price.value() / first->price.value());
  const std::int64_t span = hi->price.ticks - lo->price.ticks;
  s.close_fraction = span > 0 ? static_cast<double>(last->price.ticks - lo->price.ticks) / span : 0.5;
  s.time_diff = static_cast<double>(hi->ts - lo->ts) / static_cast<double>(width);
  s.vwap = Price{static_cast<std::int64_t>((notional + volume / 2) / volume)};
  return s;
}

}  // namespace

double partition_vol(const SynthConfig& cfg, int symbol_index, int day_index) {
  std::mt19937_64 sym_rng(partition_seed(cfg.seed, static_cast<std::uint64_t>(symbol_index), 0xFFFFFFFFULL));
  std::uniform_real_distribution<double>(cfg.base_price_low, cfg.base_price_high)(sym_rng);  // base price
  const double zs = std::normal_distribution<double>(0.0, 1.0)(sym_rng);
  std::mt19937_64 day_rng(partition_seed(cfg.seed, static_cast<std::uint64_t>(symbol_index),
                                         0x100000000ULL + static_cast<std::uint64_t>(day_index)));
  const double zd = std::normal_distribution<double>(0.0, 1.0)(day_rng);
  return cfg.minute_vol * std::exp(cfg.symbol_vol_sd * zs + cfg.day_vol_sd * zd);
}

TickPartition generate_partition(const SynthConfig& cfg, const SessionSpec& session,
                                 int symbol_index, int day_index) {
  const auto days = synth_days(cfg);
  TickPartition part;
  part.symbol = synth_symbol(symbol_index);
  part.day = days.at(static_cast<std::size_t>(day_index));

  std::mt19937_64 sym_rng(partition_seed(cfg.seed, static_cast<std::uint64_t>(symbol_index),
                                         0xFFFFFFFFULL));
  const double base =
      std::uniform_real_distribution<double>(cfg.base_price_low, cfg.base_price_high)(sym_rng);

  std::mt19937_64 rng(partition_seed(cfg.seed, static_cast<std::uint64_t>(symbol_index),
                                     static_cast<std::uint64_t>(day_index)));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::student_t_distribution<double> tdraw(cfg.tick_nu);
  std::poisson_distribution<int> poisson(cfg.tick_lambda > 0.0 ? cfg.tick_lambda : 1.0);
  std::lognormal_distribution<double> size_draw(cfg.size_log_mean, cfg.size_log_sd);
  std::bernoulli_distribution off_exchange(cfg.off_exchange_fraction);

  const auto curve = cfg.curve(session);
  const Nanos width = session.bar_width;
  const double tick_sd = std::sqrt(cfg.tick_nu / (cfg.tick_nu - 2.0));
  const double sigma_b = partition_vol(cfg, symbol_index, day_index);
  const double drift_shock = cfg.drift_shock * sigma_b / cfg.minute_vol;

  Price level = Price::from_double(base * std::exp(cfg.daily_gap_sd * normal(rng)));
  double drift = drift_shock / std::sqrt(1.0 - cfg.drift_phi * cfg.drift_phi) * normal(rng);
  MinuteSummary prev;

  std::vector<Nanos> offsets;
  std::vector<double> path;
  part.ticks.reserve(static_cast<std::size_t>(session.minutes_per_day) *
                     static_cast<std::size_t>(cfg.tick_base + cfg.tick_lambda + 1));

  for (int m = 0; m < session.minutes_per_day; ++m) {
    drift = cfg.drift_phi * drift + drift_shock * normal(rng);
    const double scale = sigma_b * curve[static_cast<std::size_t>(m)];
    const double mean = drift + cfg.alpha_momentum * prev.log_return +
                        cfg.alpha_close_fraction * (2.0 * prev.close_fraction - 1.0) * sigma_b +
                        cfg.alpha_timing * prev.time_diff * sigma_b;
    const double r = mean + scale * normal(rng);

    const int n = cfg.tick_base + (cfg.tick_lambda > 0.0 ? poisson(rng) : 0);
    const auto un = static_cast<std::size_t>(n);

    // strictly increasing offsets in [0, width): sorted uniforms on [0, width - n], +i
    offsets.resize(un);
    std::uniform_int_distribution<Nanos> when(0, width - n);
    for (auto& o : offsets) o = when(rng);
    std::sort(offsets.begin(), offsets.end());
    for (std::size_t i = 0; i < un; ++i) offsets[i] += static_cast<Nanos>(i);

    const Price open = level;
    const Price close = Price::from_double(open.value() * std::exp(r));
    const double target = std::log(close.value() / open.value());

    // Brownian bridge pinned at the first (0) and last (target) tick
    path.assign(un, 0.0);
    if (n > 1) {
      const double u0 = static_cast<double>(offsets.front()) / static_cast<double>(width);
      const double un1 = static_cast<double>(offsets.back()) / static_cast<double>(width);
      const double span = un1 - u0;
      double w = 0.0;
      for (std::size_t i = 1; i < un; ++i) {
        const double du = static_cast<double>(offsets[i] - offsets[i - 1]) / static_cast<double>(width);
        w += scale * std::sqrt(du) * normal(rng);
        path[i] = w;
      }
      const double w_end = path[un - 1];
      for (std::size_t i = 1; i + 1 < un; ++i) {
        const double frac = (static_cast<double>(offsets[i]) / static_cast<double>(width) - u0) / span;
        path[i] = path[i] - frac * (w_end - target) +
                  cfg.tick_noise_scale * scale * tdraw(rng) / tick_sd;
      }
      path[un - 1] = target;
    }

    const Nanos bar_start = session.bar_start(m);
    const std::size_t first_index = part.ticks.size();
    for (std::size_t i = 0; i < un; ++i) {
      Tick t;
      t.symbol = part.symbol;
      t.day = part.day;
      t.ts = bar_start + offsets[i];
      if (i == 0) {
        t.price = open;
      } else if (i + 1 == un) {
        t.price = close;
      } else {
        t.price = Price::from_double(open.value() * std::exp(path[i]));
        if (t.price.ticks < 1) t.price.ticks = 1;
      }
      t.size = std::max<std::int64_t>(1, std::llround(size_draw(rng)));
      const bool interior = i != 0 && i + 1 != un;
      if (interior && off_exchange(rng)) t.code = kOffExchangeCode;
      part.ticks.push_back(std::move(t));
    }
    prev = summarize_minute(part.ticks, first_index, part.ticks.size(), width);
    level = prev.vwap;
  }
  return part;
}

std::vector<std::filesystem::path> generate_ticks(const SynthConfig& cfg,
                                                  const SessionSpec& session,
                                                  const std::filesystem::path& dir) {
  session.validate();
  cfg.validate(session);
  std::filesystem::create_directories(dir);
  const auto days = synth_days(cfg);
  const int total = cfg.symbols * cfg.days;
  std::vector<std::filesystem::path> paths(static_cast<std::size_t>(total));
  parallel::for_each_index(static_cast<std::size_t>(total), [&](std::size_t idx) {
    const int k = static_cast<int>(idx);
    const int s = k / cfg.days;
    const int d = k % cfg.days;
    const TickPartition part = generate_partition(cfg, session, s, d);
    const auto path = dir / tick_file_name(part.symbol, part.day);
    write_ticks(path, part.ticks);
    paths[idx] = path;
  });
  return paths;
}

}  // namespace barlab
