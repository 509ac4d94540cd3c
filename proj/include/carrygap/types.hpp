#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "carrygap/dates.hpp"

namespace carrygap {

enum class Market : std::uint8_t { SPX, RUT };
enum class OptionRight : std::uint8_t { CALL, PUT };

// Benchmark / curve family: bootstrapped OIS discount curve, or a
// constant-maturity Treasury yield curve mapped to discount factors.
enum class CurveKind : std::uint8_t { OIS, DGS };

// Regression sample: pooled across markets (with an SPX dummy) or per market.
enum class SpecKind : std::uint8_t { POOLED, SPX, RUT };

inline std::string_view to_string(Market m) { return m == Market::SPX ? "SPX" : "RUT"; }
inline std::string_view to_string(CurveKind k) { return k == CurveKind::OIS ? "ois" : "dgs"; }
inline std::string_view to_string(SpecKind s) {
  switch (s) {
    case SpecKind::POOLED: return "pooled";
    case SpecKind::SPX: return "spx";
    default: return "rut";
  }
}

inline Market parse_market(std::string_view s) {
  if (s == "SPX" || s == "spx") return Market::SPX;
  if (s == "RUT" || s == "rut") return Market::RUT;
  throw std::runtime_error("unknown market: '" + std::string(s) + "'");
}

inline CurveKind parse_curve_kind(std::string_view s) {
  if (s == "ois" || s == "OIS") return CurveKind::OIS;
  if (s == "dgs" || s == "DGS") return CurveKind::DGS;
  throw std::runtime_error("unknown benchmark: '" + std::string(s) + "' (want ois|dgs)");
}

inline SpecKind parse_spec_kind(std::string_view s) {
  if (s == "pooled") return SpecKind::POOLED;
  if (s == "spx" || s == "SPX") return SpecKind::SPX;
  if (s == "rut" || s == "RUT") return SpecKind::RUT;
  throw std::runtime_error("unknown spec: '" + std::string(s) + "' (want pooled|spx|rut)");
}

// One side of the quote tape at the snapshot time.
struct OptionQuote {
  Market market;
  Date date;
  Date expiry;
  OptionRight right;
  double strike;
  double bid;
  double ask;

  double mid() const { return 0.5 * (bid + ask); }
  double spread() const { return ask - bid; }
};

// Matched call/put pair at one strike of one (date, expiry) cell.
struct QuotePair {
  Market market;
  Date date;
  Date expiry;
  double strike;
  double call_mid;
  double put_mid;
  double call_spread;
  double put_spread;

  // synthetic forward: call minus put, linear in strike when parity holds
  double synth_forward() const { return call_mid - put_mid; }
};

struct CellKey {
  Market market;
  Date date;
  Date expiry;
  auto operator<=>(const CellKey&) const = default;
};

// Maturity buckets in months, left-closed. Sub-month observations are kept in
// descriptive outputs but excluded from the regression panel.
enum class MaturityBin : std::uint8_t {
  SUB_1M,
  M1_2,
  M2_3,
  M3_5,
  M5_7,
  M7_10,
  M10_14,
  M14_21,
  M21_PLUS,
};

inline std::string_view bin_label(MaturityBin b) {
  switch (b) {
    case MaturityBin::SUB_1M: return "sub1m";
    case MaturityBin::M1_2: return "1-2m";
    case MaturityBin::M2_3: return "2-3m";
    case MaturityBin::M3_5: return "3-5m";
    case MaturityBin::M5_7: return "5-7m";
    case MaturityBin::M7_10: return "7-10m";
    case MaturityBin::M10_14: return "10-14m";
    case MaturityBin::M14_21: return "14-21m";
    default: return "21m+";
  }
}

inline MaturityBin parse_bin(std::string_view s) {
  for (int i = 0; i <= int(MaturityBin::M21_PLUS); ++i)
    if (bin_label(MaturityBin(i)) == s) return MaturityBin(i);
  throw std::runtime_error("unknown maturity bin: '" + std::string(s) + "'");
}

}  // namespace carrygap
