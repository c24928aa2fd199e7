#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "volfilter/errors.hpp"
#include "volfilter/structure_table.hpp"

namespace volfilter {

// Layout (little endian): magic, u32 version, u32 policy, u64 model hash,
// u64 M, grid (f64 t_max, u64 n_t, f64 z_min, f64 z_max, u64 n_z,
// u64 n_paths, u64 seed), f64 intensity[M*M], f64 survival[M], f64 mean_rates[M], then the
// arrays q, q_stderr, qbar, qbar_stderr, p, tail_budget, and finally a u64
// FNV-1a checksum of every preceding byte.

static_assert(std::endian::native == std::endian::little, "table files assume little endian");

namespace {

constexpr char kMagic[8] = {'V', 'O', 'L', 'F', 'T', 'B', 'L', '\0'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

class Writer {
 public:
  template <class T>
  void put(T v) {
    const auto* b = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), b, b + sizeof(T));
  }
  void put(const std::vector<double>& v) {
    const auto* b = reinterpret_cast<const char*>(v.data());
    bytes_.insert(bytes_.end(), b, b + v.size() * sizeof(double));
  }
  std::vector<char>& bytes() { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  Reader(const std::vector<char>& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::vector<double> doubles(std::size_t n) {
    if (n > (end_ - pos_) / sizeof(double)) throw CorruptFile("table file is truncated");
    std::vector<double> v(n);
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw CorruptFile("table file is truncated");
  }
  const std::vector<char>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_table(const StructureTable& table, const std::filesystem::path& path) {
  Writer w;
  for (char c : kMagic) w.put(c);
  w.put(kVersion);
  w.put(static_cast<std::uint32_t>(table.policy()));
  w.put(table.model_hash());
  w.put(static_cast<std::uint64_t>(table.size()));
  const GridSpec& g = table.grid();
  w.put(g.t_max);
  w.put(static_cast<std::uint64_t>(g.n_t));
  w.put(g.z_min);
  w.put(g.z_max);
  w.put(static_cast<std::uint64_t>(g.n_z));
  w.put(static_cast<std::uint64_t>(g.n_paths));
  w.put(g.seed);
  const Matrix& lam = table.intensity();
  for (Eigen::Index j = 0; j < lam.rows(); ++j) {
    for (Eigen::Index i = 0; i < lam.cols(); ++i) w.put(lam(j, i));
  }
  for (Eigen::Index i = 0; i < table.survival_rates().size(); ++i) w.put(table.survival_rates()[i]);
  for (Eigen::Index i = 0; i < table.mean_rates().size(); ++i) w.put(table.mean_rates()[i]);
  w.put(table.q_data());
  w.put(table.q_stderr_data());
  w.put(table.qbar_data());
  w.put(table.qbar_stderr_data());
  w.put(table.p_data());
  w.put(table.tail_budget_data());
  w.put(fnv1a(w.bytes().data(), w.bytes().size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileError("cannot open table file for writing: " + path.string());
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw FileError("failed writing table file: " + path.string());
}

StructureTable load_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open table file: " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint64_t) ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CorruptFile("not a structure table file: " + path.string());
  }
  const std::size_t body = bytes.size() - sizeof(std::uint64_t);
  Reader r(bytes, body);
  for (std::size_t i = 0; i < sizeof(kMagic); ++i) r.get<char>();
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw VersionMismatch("table file version " + std::to_string(version) + ", expected " +
                          std::to_string(kVersion));
  }
  std::uint64_t stored_sum;
  std::memcpy(&stored_sum, bytes.data() + body, sizeof(stored_sum));
  if (stored_sum != fnv1a(bytes.data(), body)) throw CorruptFile("table file checksum mismatch");

  const auto policy = r.get<std::uint32_t>();
  if (policy > static_cast<std::uint32_t>(PolicyKind::kFixedGrid)) {
    throw CorruptFile("table file has an unknown policy tag");
  }
  const auto hash = r.get<std::uint64_t>();
  const auto m = r.get<std::uint64_t>();
  GridSpec g;
  g.t_max = r.get<double>();
  g.n_t = r.get<std::uint64_t>();
  g.z_min = r.get<double>();
  g.z_max = r.get<double>();
  g.n_z = r.get<std::uint64_t>();
  g.n_paths = r.get<std::uint64_t>();
  g.seed = r.get<std::uint64_t>();
  // Sizes are bounded by the file length before anything is allocated.
  const double n3 = static_cast<double>(m) * static_cast<double>(m) * static_cast<double>(g.n_t);
  const double expected = 8.0 * (static_cast<double>(m) * static_cast<double>(m + 2) +
                                 2.0 * n3 * static_cast<double>(g.n_z) + 4.0 * n3);
  if (m == 0 || expected != static_cast<double>(body - r.position())) {
    throw CorruptFile("table file size does not match its header");
  }
  Matrix lam(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  for (Eigen::Index j = 0; j < lam.rows(); ++j) {
    for (Eigen::Index i = 0; i < lam.cols(); ++i) lam(j, i) = r.get<double>();
  }
  Vector survival(static_cast<Eigen::Index>(m));
  for (Eigen::Index i = 0; i < survival.size(); ++i) survival[i] = r.get<double>();
  Vector mean_rates(static_cast<Eigen::Index>(m));
  for (Eigen::Index i = 0; i < mean_rates.size(); ++i) mean_rates[i] = r.get<double>();
  const auto n3s = static_cast<std::size_t>(n3);
  auto q = r.doubles(n3s * g.n_z);
  auto q_se = r.doubles(n3s * g.n_z);
  auto qbar = r.doubles(n3s);
  auto qbar_se = r.doubles(n3s);
  auto p = r.doubles(n3s);
  auto budget = r.doubles(n3s);
  try {
    return StructureTable(g, static_cast<PolicyKind>(policy), hash, std::move(lam),
                          std::move(survival), std::move(mean_rates), std::move(q), std::move(q_se),
                          std::move(qbar), std::move(qbar_se), std::move(p), std::move(budget));
  } catch (const InvalidInput& e) {
    throw CorruptFile(std::string("table file is inconsistent: ") + e.what());
  }
}

StructureTable load_table(const std::filesystem::path& path, std::uint64_t expected_hash) {
  StructureTable table = load_table(path);
  if (table.model_hash() != expected_hash) {
    throw ModelHashMismatch("table " + path.string() + " was built for a different model");
  }
  return table;
}

}  // namespace volfilter
