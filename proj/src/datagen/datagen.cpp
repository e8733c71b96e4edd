#include "pvfd/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "pvfd/error.hpp"

namespace pvfd::datagen {

namespace {

constexpr double kDaysPerYear = 365.0;

double clamp_normal(Rng& rng, double limit) { return std::clamp(rng.normal(), -limit, limit); }

}  // namespace

WeatherDay synth_weather(const WeatherConfig& c, std::uint32_t day, Rng& rng) {
  const double phase =
      2.0 * std::numbers::pi * static_cast<double>((c.first_day_of_year + day) % 365) /
      kDaysPerYear;
  const double length = c.mean_day_hours + c.day_hours_swing * std::cos(phase);
  const double sunrise = 12.0 - 0.5 * length;
  const double amplitude = c.noon_cos_zenith + c.noon_cos_zenith_swing * std::cos(phase);
  const double clearness = std::min(1.0, rng.uniform(0.3, 1.25));
  const double sigma = 0.03 + 0.25 * (1.0 - clearness);

  WeatherDay w{Tensor({c.slots, 3}), std::vector<double>(c.slots, 0.0)};
  for (std::size_t t = 0; t < c.slots; ++t) {
    const double hour = 24.0 * static_cast<double>(t) / static_cast<double>(c.slots);
    const double u = (hour - sunrise) / length;
    if (u <= 0.0 || u >= 1.0) continue;
    const double arc = std::sin(std::numbers::pi * u);
    const double cz = amplitude * arc;
    const double cloud = std::clamp(1.0 + sigma * rng.normal(), 0.05, 1.3);
    const double dni = c.clear_dni * clearness * cloud * arc;
    const double dhi = c.clear_dhi * arc * (1.0 + 1.5 * (1.0 - clearness));
    const double ghi = (dhi + dni * cz) * (1.0 + c.sensor_noise * rng.uniform(-1.0, 1.0));
    w.irr.at(t, 0) = dhi;
    w.irr.at(t, 1) = dni;
    w.irr.at(t, 2) = ghi;
    w.cos_zenith[t] = cz;
  }
  return w;
}

ProsumerDay synth_benign(const ProsumerProfile& profile, std::uint32_t community,
                         std::uint32_t day, const WeatherDay& weather, double pv_noise, Rng& rng) {
  const std::size_t slots = weather.irr.dim(0);
  ProsumerDay d;
  d.community_id = community;
  d.prosumer_id = profile.prosumer_id;
  d.day_index = day;
  d.irr = weather.irr;
  d.pvg_actual.assign(slots, 0.0);
  const double rating = profile.capacity_kw * profile.efficiency / 1000.0;
  for (std::size_t t = 0; t < slots; ++t) {
    const double ghi = weather.irr.at(t, 2);
    if (ghi <= 0.0) continue;
    d.pvg_actual[t] = std::max(0.0, rating * ghi * (1.0 + pv_noise * clamp_normal(rng, 3.0)));
  }
  d.pvg_reported = d.pvg_actual;
  return d;
}

std::vector<double> compute_caps(std::span<const ProsumerDay> history, double margin) {
  if (history.empty()) throw ConfigError("compute_caps: empty benign history");
  std::vector<double> cap(history.front().pvg_actual.size(), 0.0);
  for (const auto& d : history) {
    if (d.pvg_actual.size() != cap.size()) {
      throw DimensionError("compute_caps: days of unequal length");
    }
    for (std::size_t t = 0; t < cap.size(); ++t) cap[t] = std::max(cap[t], d.pvg_actual[t]);
  }
  for (auto& v : cap) v *= margin;
  return cap;
}

namespace {

void check_lengths(const ProsumerDay& day, std::span<const double> cap, const char* who) {
  if (cap.size() != day.pvg_actual.size()) {
    throw DimensionError(std::string(who) + ": cap length " + std::to_string(cap.size()) +
                         " != day length " + std::to_string(day.pvg_actual.size()));
  }
}

ProsumerDay as_fraud(const ProsumerDay& day, FraudType type) {
  ProsumerDay out = day;
  out.label = 1;
  out.fraud_type = type;
  return out;
}

}  // namespace

ProsumerDay inject_type1(const ProsumerDay& day, double alpha, std::span<const double> cap) {
  check_lengths(day, cap, "inject_type1");
  ProsumerDay out = as_fraud(day, FraudType::kType1);
  for (std::size_t t = 0; t < cap.size(); ++t) {
    out.pvg_reported[t] = std::min(day.pvg_actual[t] * (1.0 + alpha), cap[t]);
  }
  return out;
}

std::optional<std::size_t> peak_slot(std::span<const double> actual) {
  if (actual.empty()) return std::nullopt;
  const auto it = std::max_element(actual.begin(), actual.end());
  if (!(*it > 0.0)) return std::nullopt;
  return static_cast<std::size_t>(it - actual.begin());
}

std::optional<ProsumerDay> inject_type2(const ProsumerDay& day, std::span<const double> beta,
                                        std::size_t k_win, std::span<const double> cap) {
  check_lengths(day, cap, "inject_type2");
  if (beta.size() != cap.size()) throw DimensionError("inject_type2: beta length");
  const auto peak = peak_slot(day.pvg_actual);
  if (!peak) return std::nullopt;
  ProsumerDay out = as_fraud(day, FraudType::kType2);
  // |t - peak| < k_win
  const std::size_t lo = *peak >= k_win - 1 ? *peak - (k_win - 1) : 0;
  const std::size_t hi = std::min(cap.size(), *peak + k_win);
  for (std::size_t t = lo; t < hi; ++t) {
    out.pvg_reported[t] = std::min(day.pvg_actual[t] * (1.0 + beta[t]), cap[t]);
  }
  return out;
}

std::optional<Type3Result> inject_type3(const ProsumerDay& day, double tau,
                                        std::size_t tou_begin, std::size_t tou_end,
                                        std::size_t delta, std::span<const double> lambda,
                                        std::span<const double> cap) {
  check_lengths(day, cap, "inject_type3");
  if (lambda.size() != cap.size()) throw DimensionError("inject_type3: lambda length");
  const auto& x = day.pvg_actual;
  const auto in_tou = [&](std::size_t t) { return t >= tou_begin && t < tou_end; };
  Type3Result r{as_fraud(day, FraudType::kType3), x, {}};
  for (std::size_t t = 0; t + delta < x.size(); ++t) {
    if (x[t] > tau && !in_tou(t) && in_tou(t + delta)) r.sources.push_back(t);
  }
  if (r.sources.empty()) return std::nullopt;
  for (const std::size_t s : r.sources) {
    const double moved = lambda[s] * x[s];
    r.pre_clip[s] -= moved;
    r.pre_clip[s + delta] += moved;
  }
  for (std::size_t t = 0; t < x.size(); ++t) {
    r.day.pvg_reported[t] = std::min(r.pre_clip[t], cap[t]);
  }
  return r;
}

std::optional<ProsumerDay> inject(FraudType type, const ProsumerDay& day, double capacity_kw,
                                  std::span<const double> cap, const FraudParams& p, Rng& rng) {
  const std::size_t n = day.pvg_actual.size();
  auto factors = [&] {
    std::vector<double> f(n);
    for (auto& v : f) v = rng.uniform(p.factor_lo, p.factor_hi);
    return f;
  };
  switch (type) {
    case FraudType::kType1:
      return inject_type1(day, rng.uniform(p.factor_lo, p.factor_hi), cap);
    case FraudType::kType2:
      return inject_type2(day, factors(), p.k_win, cap);
    case FraudType::kType3: {
      const std::size_t delta = p.shifts[rng.below(p.shifts.size())];
      auto r = inject_type3(day, p.tau_fraction * capacity_kw, p.tou_begin, p.tou_end, delta,
                            factors(), cap);
      if (!r) return std::nullopt;
      return std::move(r->day);
    }
    case FraudType::kNone:
      break;
  }
  throw ConfigError("inject: fraud type none");
}

void DatagenConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (communities == 0) fail("N must be positive");
  if (prosumers_per_community == 0) fail("prosumers per community must be positive");
  if (days < 2) fail("days must be at least 2");
  if (!(fraud_rate >= 0.0 && fraud_rate < 1.0)) fail("fraud_rate must lie in [0, 1)");
  if (std::any_of(type_mix.begin(), type_mix.end(), [](double w) { return !(w >= 0.0); })) {
    fail("fraud type mix weights must be nonnegative");
  }
  if (fraud_rate > 0.0 && type_mix[0] + type_mix[1] + type_mix[2] <= 0.0) {
    fail("fraud type mix must have a positive weight");
  }
  if (!(capacity_lo > 0.0 && capacity_lo <= capacity_hi)) fail("capacity range invalid");
  if (!(efficiency_lo > 0.0 && efficiency_lo <= efficiency_hi && efficiency_hi <= 1.0)) {
    fail("efficiency range must lie in (0, 1]");
  }
  if (!(pv_noise >= 0.0 && pv_noise < 0.3)) fail("pv_noise must lie in [0, 0.3)");
  if (!(cap_margin >= 1.0)) fail("cap margin must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train fraction must lie in (0, 1)");
  if (!(test_share > 0.0 && test_share <= 1.0)) fail("test share must lie in (0, 1]");
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * days));
  if (n_train == 0 || n_train == days) fail("train/test split leaves an empty side");
  if (std::llround(test_share * static_cast<double>(days - n_train)) == 0) {
    fail("test share selects no test days");
  }
  if (weather.slots == 0 || weather.slots % 24 != 0) fail("T must be a positive multiple of 24");
  if (!(fraud.factor_lo >= 0.0 && fraud.factor_lo <= fraud.factor_hi)) {
    fail("fraud factor range invalid");
  }
  if (fraud.k_win == 0) fail("K_win must be positive");
  if (fraud.tou_begin >= fraud.tou_end || fraud.tou_end > weather.slots) {
    fail("TOU window must be a nonempty slot range within the day");
  }
}

namespace {

std::array<std::size_t, 3> type_counts(std::size_t total, const std::array<double, 3>& mix) {
  const double sum = mix[0] + mix[1] + mix[2];
  std::array<std::size_t, 3> count{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = sum > 0.0 ? static_cast<double>(total) * mix[i] / sum : 0.0;
    count[i] = static_cast<std::size_t>(std::floor(exact));
    frac[i] = exact - static_cast<double>(count[i]);
    assigned += count[i];
  }
  // Largest remainder, lower type first on ties.
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++count[order[i % 3]];
  return count;
}

}  // namespace

Dataset build_communities(const DatagenConfig& config, std::uint64_t seed) {
  config.validate();
  Dataset data;
  data.seed = seed;
  data.config = config;
  const std::size_t n_pros = config.communities * config.prosumers_per_community;
  const std::size_t n_days = config.days;
  data.prosumer_days = n_pros * n_days;

  for (std::size_t id = 0; id < n_pros; ++id) {
    Rng r(derive_seed(seed, SeedStream::kProsumer, id));
    ProsumerProfile p;
    p.prosumer_id = static_cast<std::uint32_t>(id);
    p.capacity_kw = r.uniform(config.capacity_lo, config.capacity_hi);
    p.efficiency = r.uniform(config.efficiency_lo, config.efficiency_hi);
    data.profiles.push_back(p);
  }

  std::vector<std::uint32_t> ids(n_pros);
  std::iota(ids.begin(), ids.end(), 0u);
  Rng split(derive_seed(seed, SeedStream::kSplit, 1));
  split.shuffle(std::span(ids));
  std::vector<std::uint32_t> community_of(n_pros);
  data.communities.resize(config.communities);
  for (std::size_t c = 0; c < config.communities; ++c) {
    auto& com = data.communities[c];
    com.community_id = static_cast<std::uint32_t>(c);
    const auto first = ids.begin() + static_cast<std::ptrdiff_t>(c * config.prosumers_per_community);
    com.roster.assign(first, first + static_cast<std::ptrdiff_t>(config.prosumers_per_community));
    std::sort(com.roster.begin(), com.roster.end());
    for (const auto id : com.roster) community_of[id] = static_cast<std::uint32_t>(c);
  }

  std::vector<WeatherDay> weather;
  weather.reserve(n_days);
  for (std::size_t d = 0; d < n_days; ++d) {
    Rng r(derive_seed(seed, SeedStream::kWeather, d));
    weather.push_back(synth_weather(config.weather, static_cast<std::uint32_t>(d), r));
  }

  // days[id * n_days + d]
  std::vector<ProsumerDay> days;
  days.reserve(n_pros * n_days);
  for (std::size_t id = 0; id < n_pros; ++id) {
    for (std::size_t d = 0; d < n_days; ++d) {
      Rng r(derive_seed(seed, SeedStream::kNoise, id, d));
      days.push_back(synth_benign(data.profiles[id], community_of[id], static_cast<std::uint32_t>(d),
                                  weather[d], config.pv_noise, r));
    }
  }
  for (std::size_t id = 0; id < n_pros; ++id) {
    data.caps.push_back(compute_caps(
        std::span<const ProsumerDay>(days).subspan(id * n_days, n_days), config.cap_margin));
  }

  const auto n_train = static_cast<std::size_t>(std::floor(config.train_fraction * n_days));
  std::vector<std::uint32_t> later;
  for (std::size_t d = 0; d < n_days; ++d) {
    (d < n_train ? data.train_days : later).push_back(static_cast<std::uint32_t>(d));
  }
  const auto n_test =
      static_cast<std::size_t>(std::llround(config.test_share * static_cast<double>(later.size())));
  Rng pick(derive_seed(seed, SeedStream::kSplit, 2));
  pick.shuffle(std::span(later));
  data.test_days.assign(later.begin(), later.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::sort(data.test_days.begin(), data.test_days.end());

  const auto n_fraud = static_cast<std::size_t>(
      std::llround(config.fraud_rate * static_cast<double>(data.prosumer_days)));
  if (n_fraud > 0) {
    std::vector<std::size_t> candidates(data.prosumer_days);
    std::iota(candidates.begin(), candidates.end(), std::size_t{0});
    Rng order(derive_seed(seed, SeedStream::kFraud));
    order.shuffle(std::span(candidates));
    const auto counts = type_counts(n_fraud, config.type_mix);
    std::size_t next = 0;
    for (int type = 1; type <= 3; ++type) {
      for (std::size_t k = 0; k < counts[type - 1]; ++k) {
        for (;;) {
          if (next == candidates.size()) {
            throw ConfigError("infeasible fraud counts: ran out of prosumer-days for type " +
                              std::to_string(type));
          }
          const std::size_t slot = candidates[next++];
          const std::size_t id = slot / n_days;
          const auto d = static_cast<std::uint32_t>(slot % n_days);
          Rng r(derive_seed(seed, SeedStream::kFraud, id + 1, d));
          const FraudRecord rec{static_cast<std::uint32_t>(id), d, static_cast<FraudType>(type)};
          auto injected = inject(rec.type, days[slot], data.profiles[id].capacity_kw,
                                 data.caps[id], config.fraud, r);
          if (!injected) {
            data.skipped.push_back(rec);
            continue;
          }
          days[slot] = std::move(*injected);
          data.frauds.push_back(rec);
          break;
        }
      }
    }
  }
  const auto by_key = [](const FraudRecord& a, const FraudRecord& b) {
    return std::pair(a.prosumer_id, a.day_index) < std::pair(b.prosumer_id, b.day_index);
  };
  std::sort(data.frauds.begin(), data.frauds.end(), by_key);
  std::sort(data.skipped.begin(), data.skipped.end(), by_key);

  for (auto& com : data.communities) {
    for (const auto id : com.roster) {
      for (const auto d : data.train_days) com.train.push_back(days[id * n_days + d]);
      for (const auto d : data.test_days) com.test.push_back(days[id * n_days + d]);
    }
  }
  return data;
}

std::string manifest_json(const Dataset& data) {
  using nlohmann::ordered_json;
  const auto& c = data.config;
  ordered_json j;
  j["seed"] = data.seed;
  j["config"] = {{"communities", c.communities},
                 {"prosumers_per_community", c.prosumers_per_community},
                 {"days", c.days},
                 {"slots", c.weather.slots},
                 {"fraud_rate", c.fraud_rate},
                 {"type_mix", c.type_mix},
                 {"cap_margin", c.cap_margin},
                 {"train_fraction", c.train_fraction},
                 {"test_share", c.test_share}};
  j["prosumer_days"] = data.prosumer_days;
  std::array<std::size_t, 3> by_type{};
  for (const auto& f : data.frauds) ++by_type[static_cast<int>(f.type) - 1];
  j["fraud_count"] = data.frauds.size();
  j["fraud_by_type"] = by_type;
  j["train_days"] = data.train_days;
  j["test_days"] = data.test_days;
  ordered_json coms = ordered_json::array();
  for (const auto& com : data.communities) {
    auto frauds = [](const std::vector<ProsumerDay>& v) {
      return std::count_if(v.begin(), v.end(), [](const ProsumerDay& d) { return d.label == 1; });
    };
    coms.push_back({{"id", com.community_id},
                    {"roster", com.roster},
                    {"train", com.train.size()},
                    {"train_fraud", frauds(com.train)},
                    {"test", com.test.size()},
                    {"test_fraud", frauds(com.test)}});
  }
  j["communities"] = coms;
  auto records = [](const std::vector<FraudRecord>& v) {
    ordered_json a = ordered_json::array();
    for (const auto& f : v) a.push_back({f.prosumer_id, f.day_index, static_cast<int>(f.type)});
    return a;
  };
  j["frauds"] = records(data.frauds);
  j["skipped"] = records(data.skipped);
  return j.dump(1) + "\n";
}

}  // namespace pvfd::datagen
