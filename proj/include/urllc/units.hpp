#pragma once

// Unit conversions used at the configuration boundary.  Internals work in
// watts and linear ratios exclusively; decibel quantities appear only in
// configs and on the command line.

#include <cmath>

namespace urllc {

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

inline double dbm_to_watts(double dbm) { return db_to_linear(dbm - 30.0); }

// Transmit power budget for a given per-user SNR budget at noise power
// sigma2 (the budget definition: P = SNR * sigma2 in linear scale).
inline double snr_to_power(double snr_db, double sigma2 = 1.0) {
  return db_to_linear(snr_db) * sigma2;
}

}  // namespace urllc
