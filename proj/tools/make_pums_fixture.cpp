// Writes a synthetic PUMS-shaped dataset with the household and housing-unit
// variables used for matching: a schema INI plus row-aligned households.csv
// and units.csv. Each record draws a latent profile (income, size, tenure,
// age) and derives both sides from it, so co-occurring rows are related the
// way real microdata rows are. TEN_H always equals TEN_U on the same row.
//
// usage: make_pums_fixture OUT_DIR [N=2000] [SEED=2024]

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "dualmatch/csv.hpp"
#include "dualmatch/rng.hpp"

namespace {

using dualmatch::Stream;
namespace csv = dualmatch::csv;

constexpr const char* kSchema = R"([ACR]
side = B
kind = categorical
vocabulary = 1,2,3

[BDSP]
side = B
kind = numeric

[BLD]
side = B
kind = categorical
vocabulary = 1,2,3,4,5,6,7,8,9,10

[MRGP]
side = B
kind = numeric

[RMSP]
side = B
kind = numeric

[RNTP]
side = B
kind = numeric

[TEN_U]
side = B
kind = categorical
vocabulary = 1,2,3,4
role = tenure
own_codes = 1,2

[VALP]
side = B
kind = numeric

[VEH]
side = B
kind = numeric

[YRBLT]
side = B
kind = categorical
vocabulary = 1939,1940,1950,1960,1970,1980,1990,2000,2010,2020

[TAXAMT]
side = B
kind = numeric

[NP]
side = A
kind = numeric

[GRNTP]
side = A
kind = numeric

[GRPIP]
side = A
kind = numeric

[HHL]
side = A
kind = categorical
vocabulary = 1,2,3,4,5

[HHLDRAGEP]
side = A
kind = numeric

[HHLDRRAC1P]
side = A
kind = categorical
vocabulary = 1,2,3,4,5,6,7,8,9

[TEN_H]
side = A
kind = categorical
vocabulary = 1,2,3,4
role = tenure
own_codes = 1,2

[HUPAC]
side = A
kind = categorical
vocabulary = 1,2,3,4

[R65]
side = A
kind = categorical
vocabulary = 0,1,2

[SCHL]
side = A
kind = numeric

[DIS]
side = A
kind = numeric

[HINCP]
side = A
kind = numeric
)";

std::string num(double v) { return csv::format_double(std::round(v)); }

std::size_t pick(Stream& s, const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = s.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return weights.size() - 1;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: make_pums_fixture OUT_DIR [N] [SEED]\n";
    return 1;
  }
  const std::filesystem::path dir = argv[1];
  const std::size_t n = argc > 2 ? std::stoul(argv[2]) : 2000;
  const std::uint64_t seed = argc > 3 ? std::stoull(argv[3]) : 2024;
  std::filesystem::create_directories(dir);

  std::ofstream(dir / "pums_schema.ini") << kSchema;
  std::ofstream hh(dir / "households.csv");
  std::ofstream hu(dir / "units.csv");
  csv::write_row(hh, {"NP", "GRNTP", "GRPIP", "HHL", "HHLDRAGEP", "HHLDRRAC1P", "TEN_H", "HUPAC", "R65", "SCHL",
                      "DIS", "HINCP"});
  csv::write_row(hu, {"ACR", "BDSP", "BLD", "MRGP", "RMSP", "RNTP", "TEN_U", "VALP", "VEH", "YRBLT", "TAXAMT"});

  static const char* kYears[] = {"1939", "1940", "1950", "1960", "1970", "1980", "1990", "2000", "2010", "2020"};
  for (std::size_t i = 0; i < n; ++i) {
    Stream s(seed, {i});
    const double age = std::clamp(18.0 + 62.0 * s.uniform() + 5.0 * s.normal(), 18.0, 95.0);
    const double log_income = 10.6 + 0.7 * s.normal() + 0.01 * std::min(age - 18.0, 40.0);
    const double income = std::max(0.0, std::exp(log_income));
    const double own_p = std::clamp(0.15 + 0.008 * (age - 18.0) + 0.25 * (log_income - 10.6), 0.05, 0.95);
    const bool owner = s.uniform() < own_p;
    const int tenure = owner ? (s.uniform() < std::clamp((70.0 - age) / 40.0, 0.1, 0.9) ? 1 : 2)
                             : (s.uniform() < 0.95 ? 3 : 4);
    const int persons = 1 + static_cast<int>(std::min(7.0, std::floor(-std::log(1.0 - s.uniform()) * 1.4 +
                                                                       (age < 60 ? 0.8 : 0.0))));
    const bool children = persons >= 3 && age < 55 && s.uniform() < 0.7;
    const int r65 = age >= 65 ? (persons >= 2 && s.uniform() < 0.6 ? 2 : 1) : (s.uniform() < 0.05 ? 1 : 0);
    const int schl = static_cast<int>(std::clamp(16.0 + 2.5 * (log_income - 10.6) + 2.0 * s.normal(), 1.0, 24.0));
    const int dis = age > 60 ? static_cast<int>(pick(s, {6, 3, 1})) : static_cast<int>(pick(s, {9, 1, 0.2}));
    const std::size_t hhl = pick(s, {75, 13, 5, 5, 2}) + 1;
    const std::size_t race = pick(s, {62, 22, 1, 0.2, 0.5, 5, 0.1, 4, 5}) + 1;
    const std::size_t hupac = children ? pick(s, {3, 3, 4}) + 1 : 4;

    // Dwelling follows the household: size tracks persons, value tracks income.
    const int bedrooms = std::clamp(persons / 2 + (owner ? 2 : 1) + static_cast<int>(std::round(0.7 * s.normal())), 0, 6);
    const int rooms = std::clamp(bedrooms + 2 + static_cast<int>(pick(s, {3, 4, 2})), 1, 12);
    const std::size_t bld = owner ? pick(s, {2, 70, 8, 4, 3, 3, 2, 2, 3, 0.3}) + 1
                                  : pick(s, {1, 20, 8, 10, 12, 15, 12, 10, 12, 0.1}) + 1;
    const std::size_t acr = owner && bld == 2 ? pick(s, {5, 4, 1}) + 1 : 1;
    const std::size_t year = std::min<std::size_t>(9, pick(s, {1, 1, 1, 1.2, 1.3, 1.2, 1.3, 1.2, 1, 0.3}));
    const double vehicles = std::clamp(std::round(0.6 * persons + 0.6 * (log_income - 10.3) + 0.7 * s.normal()), 0.0, 6.0);

    std::string mrgp, valp, taxamt, rntp, grntp, grpip;
    if (owner) {
      const double value = std::exp(std::log(income) + 1.2 + 0.35 * s.normal());
      valp = num(value);
      taxamt = num(value * (0.008 + 0.004 * s.uniform()));
      if (tenure == 1) mrgp = num(value * (0.005 + 0.002 * s.uniform()));
    } else {
      const double rent = std::clamp(income * (0.02 + 0.02 * s.uniform()), 300.0, 4000.0);
      if (tenure == 3) {
        rntp = num(rent);
        const double gross = rent + 80.0 + 60.0 * s.uniform();
        grntp = num(gross);
        grpip = num(std::min(101.0, 1200.0 * gross / std::max(income, 1.0)));
      }
    }
    const std::string ten = std::to_string(tenure);
    csv::write_row(hh, {std::to_string(persons), grntp, grpip, std::to_string(hhl), num(age), std::to_string(race), ten,
                        std::to_string(hupac), std::to_string(r65), std::to_string(schl), std::to_string(dis),
                        num(income)});
    csv::write_row(hu, {std::to_string(acr), std::to_string(bedrooms), std::to_string(bld), mrgp,
                        std::to_string(rooms), rntp, ten, valp, csv::format_double(vehicles), kYears[year], taxamt});
  }
  std::cout << "wrote " << n << " records to " << dir.string() << '\n';
  return 0;
}
