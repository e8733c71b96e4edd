#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <unordered_set>

#include "pvfd/error.hpp"
#include "pvfd/federation.hpp"

namespace pvfd::federation {

namespace {

constexpr std::array<std::uint8_t, 8> kMagic{'P', 'V', 'F', 'D', 'M', 'S', 'G', 1};
constexpr std::uint8_t kUplink = 'U';
constexpr std::uint8_t kDownlink = 'D';
constexpr std::uint8_t kScalar = 'u';
constexpr std::uint8_t kArray = 'f';

class Writer {
 public:
  explicit Writer(std::uint8_t kind) {
    out_.assign(kMagic.begin(), kMagic.end());
    out_.push_back(kind);
  }

  void scalar(const std::string& name, std::uint64_t v) {
    header(name, kScalar);
    u64(v);
  }

  void array(const std::string& name, std::span<const double> values) {
    header(name, kArray);
    u64(values.size());
    for (const double v : values) u64(std::bit_cast<std::uint64_t>(v));
  }

  Bytes take() { return std::move(out_); }

 private:
  void header(const std::string& name, std::uint8_t type) {
    out_.push_back(static_cast<std::uint8_t>(name.size()));
    out_.insert(out_.end(), name.begin(), name.end());
    out_.push_back(type);
  }

  void u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out_.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  }

  Bytes out_;
};

struct Field {
  std::string name;
  std::uint8_t type = kScalar;
  std::uint64_t scalar = 0;
  std::vector<double> values;
};

struct Parsed {
  std::uint8_t kind = 0;
  std::vector<Field> fields;
};

Parsed parse(const Bytes& bytes) {
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (bytes.size() - pos < n) throw ProtocolError("message truncated at byte " + std::to_string(pos));
  };
  auto u64 = [&] {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes[pos + b]) << (8 * b);
    pos += 8;
    return v;
  };
  need(kMagic.size() + 1);
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw ProtocolError("message lacks the protocol magic");
  }
  pos = kMagic.size();
  Parsed p;
  p.kind = bytes[pos++];
  while (pos < bytes.size()) {
    Field f;
    const std::size_t len = bytes[pos++];
    need(len + 1);
    f.name.assign(reinterpret_cast<const char*>(bytes.data() + pos), len);
    pos += len;
    f.type = bytes[pos++];
    if (f.type == kScalar) {
      f.scalar = u64();
    } else if (f.type == kArray) {
      const std::uint64_t n = u64();
      if (n > (bytes.size() - pos) / 8) throw ProtocolError("array '" + f.name + "' overruns message");
      f.values.resize(n);
      for (auto& v : f.values) v = std::bit_cast<double>(u64());
    } else {
      throw ProtocolError("field '" + f.name + "' has unknown type code");
    }
    p.fields.push_back(std::move(f));
  }
  return p;
}

// "proto.<k>" / "support.<k>" -> k
bool class_suffix(const std::string& name, const std::string& prefix, int& k) {
  if (name.rfind(prefix, 0) != 0 || name.size() == prefix.size()) return false;
  const auto digits = name.substr(prefix.size());
  if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return false;
  }
  k = std::stoi(digits);
  return true;
}

bool allowed(std::uint8_t kind, const Field& f) {
  int k = 0;
  if (f.name == "round") return f.type == kScalar;
  if (f.name == "params") return f.type == kArray;
  if (class_suffix(f.name, "proto.", k)) return f.type == kArray;
  if (kind == kUplink) {
    if (f.name == "community_id") return f.type == kScalar;
    if (class_suffix(f.name, "support.", k)) return f.type == kScalar;
  }
  return false;
}

std::uint32_t narrow(std::uint64_t v, const char* what) {
  if (v > UINT32_MAX) throw ProtocolError(std::string(what) + " out of range");
  return static_cast<std::uint32_t>(v);
}

struct GramHash {
  std::size_t operator()(const std::array<std::uint64_t, 4>& g) const {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (const auto v : g) h = (h ^ v) * 0x100000001b3ULL;
    return static_cast<std::size_t>(h);
  }
};

}  // namespace

Bytes encode(const UplinkMessage& m) {
  Writer w(kUplink);
  w.scalar("community_id", m.community_id);
  w.scalar("round", m.round);
  w.array("params", m.params);
  for (const auto& [k, p] : m.prototypes) {
    w.array("proto." + std::to_string(k), p.mean);
    w.scalar("support." + std::to_string(k), p.count);
  }
  return w.take();
}

Bytes encode(const DownlinkMessage& m) {
  Writer w(kDownlink);
  w.scalar("round", m.round);
  w.array("params", m.params);
  for (const auto& [k, g] : m.prototypes) w.array("proto." + std::to_string(k), g);
  return w.take();
}

UplinkMessage decode_uplink(const Bytes& bytes) {
  auto p = parse(bytes);
  if (p.kind != kUplink) throw ProtocolError("expected an uplink message");
  UplinkMessage m;
  for (auto& f : p.fields) {
    if (!allowed(p.kind, f)) throw ProtocolError("unexpected uplink field '" + f.name + "'");
    int k = 0;
    if (f.name == "community_id") {
      m.community_id = narrow(f.scalar, "community_id");
    } else if (f.name == "round") {
      m.round = narrow(f.scalar, "round");
    } else if (f.name == "params") {
      m.params = std::move(f.values);
    } else if (class_suffix(f.name, "proto.", k)) {
      m.prototypes[k].mean = std::move(f.values);
    } else if (class_suffix(f.name, "support.", k)) {
      m.prototypes[k].count = f.scalar;
    }
  }
  return m;
}

DownlinkMessage decode_downlink(const Bytes& bytes) {
  auto p = parse(bytes);
  if (p.kind != kDownlink) throw ProtocolError("expected a downlink message");
  DownlinkMessage m;
  for (auto& f : p.fields) {
    if (!allowed(p.kind, f)) throw ProtocolError("unexpected downlink field '" + f.name + "'");
    int k = 0;
    if (f.name == "round") {
      m.round = narrow(f.scalar, "round");
    } else if (f.name == "params") {
      m.params = std::move(f.values);
    } else if (class_suffix(f.name, "proto.", k)) {
      m.prototypes[k] = std::move(f.values);
    }
  }
  return m;
}

std::size_t transmitted_parameters(const Bytes& bytes) {
  std::size_t n = 0;
  for (const auto& f : parse(bytes).fields) n += f.values.size();
  return n;
}

std::vector<std::string> privacy_scan(const Bytes& bytes,
                                      std::span<const datagen::ProsumerDay> raw) {
  std::vector<std::string> findings;
  const auto p = parse(bytes);
  std::unordered_set<std::array<std::uint64_t, 4>, GramHash> grams;
  for (const auto& f : p.fields) {
    if (!allowed(p.kind, f)) findings.push_back("field '" + f.name + "' is not part of the protocol");
    for (std::size_t i = 0; i + 4 <= f.values.size(); ++i) {
      grams.insert({std::bit_cast<std::uint64_t>(f.values[i]),
                    std::bit_cast<std::uint64_t>(f.values[i + 1]),
                    std::bit_cast<std::uint64_t>(f.values[i + 2]),
                    std::bit_cast<std::uint64_t>(f.values[i + 3])});
    }
  }
  auto scan = [&](const std::vector<double>& series, const datagen::ProsumerDay& d,
                  const char* what) {
    for (std::size_t i = 0; i + 4 <= series.size(); ++i) {
      if (series[i] == 0.0 || series[i + 1] == 0.0 || series[i + 2] == 0.0 ||
          series[i + 3] == 0.0) {
        continue;
      }
      const std::array<std::uint64_t, 4> g{
          std::bit_cast<std::uint64_t>(series[i]), std::bit_cast<std::uint64_t>(series[i + 1]),
          std::bit_cast<std::uint64_t>(series[i + 2]), std::bit_cast<std::uint64_t>(series[i + 3])};
      if (grams.contains(g)) {
        findings.push_back(std::string(what) + " series of prosumer " +
                           std::to_string(d.prosumer_id) + " day " + std::to_string(d.day_index) +
                           " appears in the payload");
        return;
      }
    }
  };
  std::vector<double> channel;
  for (const auto& d : raw) {
    scan(d.pvg_reported, d, "reported");
    scan(d.pvg_actual, d, "actual");
    if (d.irr.rank() == 2) {
      for (std::size_t c = 0; c < d.irr.dim(1); ++c) {
        channel.resize(d.irr.dim(0));
        for (std::size_t t = 0; t < channel.size(); ++t) channel[t] = d.irr.at(t, c);
        scan(channel, d, "irradiance");
      }
    }
  }
  return findings;
}

}  // namespace pvfd::federation
