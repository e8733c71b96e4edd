#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pvfd/rng.hpp"
#include "pvfd/tensor.hpp"

// Synthetic prosumer-days, fraud injection, community partitioning and the
// CSV boundary. Slots are 0-based; slot t starts at t/2 hours.

namespace pvfd::datagen {

enum class FraudType : int { kNone = 0, kType1 = 1, kType2 = 2, kType3 = 3 };

struct ProsumerDay {
  std::uint32_t community_id = 0;
  std::uint32_t prosumer_id = 0;
  std::uint32_t day_index = 0;
  std::vector<double> pvg_reported;  // kW
  std::vector<double> pvg_actual;    // kW
  Tensor irr;                        // [T x 3] W/m^2: DHI, DNI, GHI
  int label = 0;                     // detector::kNormal / kFraud
  FraudType fraud_type = FraudType::kNone;
};

struct ProsumerProfile {
  std::uint32_t prosumer_id = 0;
  double capacity_kw = 5.0;
  double efficiency = 1.0;
};

struct WeatherConfig {
  std::size_t slots = 48;
  std::uint32_t first_day_of_year = 0;
  double mean_day_hours = 12.0;
  double day_hours_swing = 2.0;
  double noon_cos_zenith = 0.75;
  double noon_cos_zenith_swing = 0.2;
  double clear_dni = 850.0;
  double clear_dhi = 110.0;
  double sensor_noise = 0.01;  // GHI relative, uniform
};

// One day of weather shared by every prosumer: [T x 3] DHI, DNI, GHI, plus the
// cosine of the zenith angle per slot (0 at night).
struct WeatherDay {
  Tensor irr;
  std::vector<double> cos_zenith;
};

// Half-sine clear-sky arc peaking at 12:00, seasonal day length and amplitude,
// multiplicative cloud noise. GHI = DHI + DNI cos z up to sensor noise.
WeatherDay synth_weather(const WeatherConfig& config, std::uint32_t day, Rng& rng);

// PV = capacity * efficiency * GHI / 1000 * (1 + noise); zero where GHI is zero.
ProsumerDay synth_benign(const ProsumerProfile& profile, std::uint32_t community,
                         std::uint32_t day, const WeatherDay& weather, double pv_noise, Rng& rng);

// Per-slot maximum of pvg_actual over `history`, times `margin`.
std::vector<double> compute_caps(std::span<const ProsumerDay> history, double margin = 1.05);

struct FraudParams {
  double factor_lo = 0.1;  // alpha, beta and lambda ranges
  double factor_hi = 0.5;
  std::size_t k_win = 3;
  std::size_t tou_begin = 24;  // 12:00
  std::size_t tou_end = 30;    // 15:00, exclusive
  std::array<std::size_t, 3> shifts{4, 5, 6};
  double tau_fraction = 0.01;  // daylight threshold as a fraction of capacity
};

ProsumerDay inject_type1(const ProsumerDay& day, double alpha, std::span<const double> cap);

// Earliest argmax of pvg_actual; nullopt on an all-zero day.
std::optional<std::size_t> peak_slot(std::span<const double> actual);

// beta is per slot (only the window entries are read). nullopt on an all-zero day.
std::optional<ProsumerDay> inject_type2(const ProsumerDay& day, std::span<const double> beta,
                                        std::size_t k_win, std::span<const double> cap);

struct Type3Result {
  ProsumerDay day;
  std::vector<double> pre_clip;
  std::vector<std::size_t> sources;
};

// Sources: slots with actual > tau outside [tou_begin, tou_end) whose shifted
// target lands inside it. lambda is per slot. nullopt when no source exists.
std::optional<Type3Result> inject_type3(const ProsumerDay& day, double tau,
                                        std::size_t tou_begin, std::size_t tou_end,
                                        std::size_t delta, std::span<const double> lambda,
                                        std::span<const double> cap);

// Draws the type's random factors from `rng` and applies it.
std::optional<ProsumerDay> inject(FraudType type, const ProsumerDay& day, double capacity_kw,
                                  std::span<const double> cap, const FraudParams& params,
                                  Rng& rng);

struct DatagenConfig {
  std::size_t communities = 5;
  std::size_t prosumers_per_community = 60;
  std::size_t days = 120;
  double fraud_rate = 0.15;
  std::array<double, 3> type_mix{1.0, 1.0, 1.0};
  double capacity_lo = 4.5;
  double capacity_hi = 5.5;
  double efficiency_lo = 0.95;
  double efficiency_hi = 1.0;
  double pv_noise = 0.02;
  double cap_margin = 1.05;
  double train_fraction = 0.5;  // leading share of days used for training
  double test_share = 1.0 / 3.0;  // share of the remaining days sampled as test
  WeatherConfig weather;
  FraudParams fraud;

  // Throws ConfigError naming the field.
  void validate() const;
};

struct CommunityDataset {
  std::uint32_t community_id = 0;
  std::vector<std::uint32_t> roster;
  std::vector<ProsumerDay> train;
  std::vector<ProsumerDay> test;
};

struct FraudRecord {
  std::uint32_t prosumer_id;
  std::uint32_t day_index;
  FraudType type;
};

struct Dataset {
  std::uint64_t seed = 0;
  DatagenConfig config;
  std::vector<ProsumerProfile> profiles;  // indexed by prosumer id
  std::vector<std::vector<double>> caps;  // indexed by prosumer id
  std::vector<std::uint32_t> train_days;
  std::vector<std::uint32_t> test_days;
  std::vector<CommunityDataset> communities;
  std::vector<FraudRecord> frauds;   // applied, sorted by (prosumer, day)
  std::vector<FraudRecord> skipped;  // infeasible draws that were resampled
  std::size_t prosumer_days = 0;     // all generated prosumer-days
};

// Fraud days are drawn uniformly without replacement over all generated
// prosumer-days; exactly round(rate * total) are converted.
Dataset build_communities(const DatagenConfig& config, std::uint64_t seed);

// Structured-text manifest: seed, counts and every fraud assignment.
std::string manifest_json(const Dataset& data);

// Ausgrid-style layout. Generation file: prosumer_id,date,s00..s47 (reported
// values). Irradiance file: date,slot,dhi,dni,ghi. Day indices map to dates
// from 2011-01-01. Ingested days are labelled normal, community 0.
void write_csv(std::span<const ProsumerDay> days, const std::filesystem::path& generation,
               const std::filesystem::path& irradiance);
std::vector<ProsumerDay> ingest_csv(const std::filesystem::path& generation,
                                    const std::filesystem::path& irradiance,
                                    std::size_t slots = 48);

std::string date_of(std::uint32_t day_index);
std::uint32_t day_of(const std::string& date);

}  // namespace pvfd::datagen
