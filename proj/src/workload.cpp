#include "cafe/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace cafe {

namespace {

double unit_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Single standard normal via Box-Muller; stateless so stream state stays
// fully captured by the engine.
double normal_draw(std::mt19937_64& rng) {
  double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
  double u2 = unit_draw(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void ZipfStreamSpec::validate() const {
  if (universe < 1) throw ConfigError("workload: universe must be >= 1");
  if (!(exponent >= 0.0)) throw ConfigError("workload: exponent must be >= 0");
  if (drift) {
    if (drift->window_events < 1) throw ConfigError("workload: drift window must be >= 1");
    if (!(drift->permutation_fraction >= 0.0 && drift->permutation_fraction <= 1.0))
      throw ConfigError("workload: drift fraction must be in [0, 1]");
  }
}

ZipfStream::ZipfStream(ZipfStreamSpec spec) : spec_(spec), rng_(mix64(spec.seed)) {
  spec_.validate();
  const std::uint64_t n = spec_.universe;
  cdf_.resize(n);
  double acc = 0.0;
  for (std::uint64_t i = 0; i < n; ++i) {
    acc += std::pow(static_cast<double>(i + 1), -spec_.exponent);
    cdf_[i] = acc;
  }
  for (double& v : cdf_) v /= acc;
  cdf_.back() = 1.0;

  rank_to_feature_.resize(n);
  std::iota(rank_to_feature_.begin(), rank_to_feature_.end(), 0u);
  std::mt19937_64 perm_rng(mix64(spec_.seed ^ 0xA5A5ULL));
  for (std::uint64_t i = n; i > 1; --i) {
    std::uint64_t j = perm_rng() % i;
    std::swap(rank_to_feature_[i - 1], rank_to_feature_[j]);
  }
  scratch_idx_.resize(n);
  std::iota(scratch_idx_.begin(), scratch_idx_.end(), 0u);
}

double ZipfStream::planted_weight(FeatureId f, std::uint64_t seed, double scale) {
  double u1 = (static_cast<double>(hash_feature(f, seed ^ 0x11ULL) >> 11) + 1.0) * 0x1.0p-53;
  double u2 = hash_unit(hash_feature(f, seed ^ 0x22ULL));
  return scale * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void ZipfStream::apply_drift() {
  const std::uint64_t n = spec_.universe;
  auto m = static_cast<std::uint64_t>(std::llround(spec_.drift->permutation_fraction *
                                                   static_cast<double>(n)));
  if (m < 2) return;
  // Pick m distinct rank positions, then shuffle their feature assignments.
  for (std::uint64_t i = 0; i < m; ++i) {
    std::uint64_t j = i + rng_() % (n - i);
    std::swap(scratch_idx_[i], scratch_idx_[j]);
  }
  std::vector<std::uint32_t> feats(m);
  for (std::uint64_t i = 0; i < m; ++i) feats[i] = rank_to_feature_[scratch_idx_[i]];
  for (std::uint64_t i = m; i > 1; --i) {
    std::uint64_t j = rng_() % i;
    std::swap(feats[i - 1], feats[j]);
  }
  for (std::uint64_t i = 0; i < m; ++i) rank_to_feature_[scratch_idx_[i]] = feats[i];
}

bool ZipfStream::next(StreamEvent& ev) {
  if (emitted_ >= spec_.event_count) return false;
  if (spec_.drift && emitted_ > 0 && emitted_ % spec_.drift->window_events == 0)
    apply_drift();

  double u = unit_draw(rng_);
  auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
  auto rank = static_cast<std::size_t>(it - cdf_.begin());
  ev.feature = rank_to_feature_[rank];

  double logit = planted_weight(ev.feature, spec_.seed, spec_.weight_scale);
  if (spec_.label_noise > 0.0) logit += spec_.label_noise * normal_draw(rng_);
  ev.label = unit_draw(rng_) < sigmoid(logit) ? 1 : 0;

  ++emitted_;
  return true;
}

std::vector<StreamEvent> ZipfStream::generate_all() {
  std::vector<StreamEvent> out;
  out.reserve(spec_.event_count - emitted_);
  StreamEvent ev;
  while (next(ev)) out.push_back(ev);
  return out;
}

std::vector<std::uint8_t> ZipfStream::serialize() const {
  ByteWriter w;
  w.magic("ZST1");
  w.u64(spec_.universe);
  w.f64(spec_.exponent);
  w.u64(spec_.event_count);
  w.u64(spec_.seed);
  w.u8(spec_.drift ? 1 : 0);
  if (spec_.drift) {
    w.u64(spec_.drift->window_events);
    w.f64(spec_.drift->permutation_fraction);
  }
  w.f64(spec_.weight_scale);
  w.f64(spec_.label_noise);
  std::ostringstream os;
  os << rng_;
  w.str(os.str());
  for (std::uint32_t v : rank_to_feature_) w.u32(v);
  for (std::uint32_t v : scratch_idx_) w.u32(v);
  w.u64(emitted_);
  return w.take();
}

ZipfStream ZipfStream::deserialize(std::span<const std::uint8_t> state) {
  ByteReader r(state);
  r.expect_magic("ZST1");
  ZipfStreamSpec spec;
  spec.universe = r.u64();
  spec.exponent = r.f64();
  spec.event_count = r.u64();
  spec.seed = r.u64();
  if (r.u8()) {
    DriftSpec d;
    d.window_events = r.u64();
    d.permutation_fraction = r.f64();
    spec.drift = d;
  }
  spec.weight_scale = r.f64();
  spec.label_noise = r.f64();
  ZipfStream s(spec);
  std::istringstream is(r.str());
  is >> s.rng_;
  if (!is) throw CorruptState("stream state: bad rng encoding");
  for (std::uint32_t& v : s.rank_to_feature_) v = r.u32();
  for (std::uint32_t& v : s.scratch_idx_) v = r.u32();
  s.emitted_ = r.u64();
  return s;
}

std::vector<StreamEvent> ingest_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace: " + path);
  std::vector<StreamEvent> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::size_t comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(line_no, "missing comma");
    try {
      std::size_t used = 0;
      std::uint64_t f = std::stoull(line.substr(0, comma), &used);
      if (used != comma) throw std::invalid_argument("trailing");
      std::string rest = line.substr(comma + 1);
      int y = std::stoi(rest, &used);
      if (used != rest.size() || (y != 0 && y != 1))
        throw std::invalid_argument("label must be 0 or 1");
      out.push_back({f, y});
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

void export_trace(const std::vector<StreamEvent>& events, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace: " + path);
  for (const StreamEvent& ev : events) out << ev.feature << ',' << ev.label << '\n';
}

}  // namespace cafe
