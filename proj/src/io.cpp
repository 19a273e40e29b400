#include "pdmr/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

namespace pdmr {

namespace {

constexpr char kDatasetMagic[] = "PDMR0001";
constexpr char kWeightMagic[] = "PDMW0001";
constexpr char kImageMagic[] = "PDMI0001";

enum DType : std::uint8_t { kF32 = 0, kI8 = 1, kI32 = 2 };

class Writer
{
public:
  template <typename T>
  void put(T v)
  {
    char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    out_.append(raw, sizeof(T));
  }
  void bytes(void const *p, std::size_t n) { out_.append(static_cast<char const *>(p), n); }
  void magic(char const *m) { out_.append(m, 8); }
  template <typename T>
  void complex_block(std::vector<std::complex<T>> const &v)
  {
    for (auto const &c : v) {
      put(static_cast<float>(c.real()));
      put(static_cast<float>(c.imag()));
    }
  }
  std::string &str() { return out_; }

private:
  std::string out_;
};

class Reader
{
public:
  Reader(std::string const &bytes, char const *what) : bytes_(bytes), what_(what) {}

  template <typename T>
  T get()
  {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void raw(void *dst, std::size_t n)
  {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  void expect_magic(char const *m)
  {
    need(8);
    if (bytes_.compare(pos_, 8, m) != 0) {
      fail("bad magic, expected " + std::string(m, 8));
    }
    pos_ += 8;
  }
  void expect_section(std::uint64_t expected, char const *section)
  {
    auto const len = get<std::uint64_t>();
    if (len != expected) {
      fail(std::string("section '") + section + "' declares " + std::to_string(len) + " bytes, expected " +
           std::to_string(expected));
    }
    need(static_cast<std::size_t>(len));
  }
  std::vector<std::complex<float>> complex_block(std::size_t n)
  {
    std::vector<std::complex<float>> v(n);
    for (auto &c : v) {
      float const re = get<float>();
      float const im = get<float>();
      c = {re, im};
    }
    return v;
  }
  void expect_end()
  {
    if (pos_ != bytes_.size()) {
      fail(std::to_string(bytes_.size() - pos_) + " trailing bytes");
    }
  }
  [[noreturn]] void fail(std::string const &msg) const { throw DataError(std::string(what_) + ": " + msg); }

private:
  void need(std::size_t n) const
  {
    if (n > bytes_.size() - pos_) {
      fail("truncated at byte " + std::to_string(pos_));
    }
  }
  std::string const &bytes_;
  char const *what_;
  std::size_t pos_ = 0;
};

constexpr std::uint64_t kComplexBytes = 8;

std::uint32_t narrow(long v, char const *what)
{
  if (v < 0 || v > static_cast<long>(UINT32_MAX)) {
    throw DataError(std::string("value of ") + what + " does not fit in u32");
  }
  return static_cast<std::uint32_t>(v);
}

} // namespace

std::string serialize_dataset(Dataset const &d)
{
  long const n_pe = d.ground_truth.n_pe;
  long const n_ro = d.ground_truth.n_ro;
  long const n_c = d.maps.n_coils();
  Writer w;
  w.magic(kDatasetMagic);
  w.put(narrow(n_pe, "n_pe"));
  w.put(narrow(n_ro, "n_ro"));
  w.put(narrow(n_c, "n_c"));
  w.put(narrow(d.mask.rate, "rate"));
  w.put(narrow(d.mask.offset, "offset"));
  w.put(d.params.sigma);
  w.put(static_cast<std::uint64_t>(d.params.seed));

  w.put(static_cast<std::uint64_t>(d.ground_truth.data.size() * kComplexBytes));
  w.complex_block(d.ground_truth.data);

  w.put(static_cast<std::uint64_t>(n_c * n_pe * n_ro * static_cast<long>(kComplexBytes)));
  for (auto const &m : d.maps.maps) {
    if (m.n_pe != n_pe || m.n_ro != n_ro) {
      throw DimensionError("serialize_dataset: coil map shape differs from the image");
    }
    w.complex_block(m.data);
  }

  w.put(static_cast<std::uint64_t>(4 * (1 + d.mask.sampled_rows.size())));
  w.put(narrow(d.mask.n_sampled(), "mask size"));
  for (long r : d.mask.sampled_rows) {
    w.put(narrow(r, "mask row"));
  }

  long const m_rows = d.mask.n_sampled();
  w.put(static_cast<std::uint64_t>(n_c * m_rows * n_ro * static_cast<long>(kComplexBytes)));
  for (auto const &c : d.kspace.coils) {
    if (c.n_pe != m_rows || c.n_ro != n_ro) {
      throw DimensionError("serialize_dataset: k-space shape differs from the mask");
    }
    w.complex_block(c.data);
  }
  return std::move(w.str());
}

Dataset deserialize_dataset(std::string const &bytes)
{
  Reader r(bytes, "dataset file");
  r.expect_magic(kDatasetMagic);
  Dataset d;
  long const n_pe = r.get<std::uint32_t>();
  long const n_ro = r.get<std::uint32_t>();
  long const n_c = r.get<std::uint32_t>();
  long const rate = r.get<std::uint32_t>();
  long const offset = r.get<std::uint32_t>();
  d.params.sigma = r.get<double>();
  d.params.seed = r.get<std::uint64_t>();
  if (n_pe < 1 || n_ro < 1 || n_c < 1 || rate < 1 || n_pe % rate != 0 || offset >= rate) {
    r.fail("inconsistent header");
  }
  d.params.n_pe = n_pe;
  d.params.n_ro = n_ro;
  d.params.n_coils = n_c;
  d.params.rate = rate;
  d.params.offset = offset;
  auto const pixels = static_cast<std::uint64_t>(n_pe * n_ro);

  r.expect_section(pixels * kComplexBytes, "ground truth");
  d.ground_truth = ComplexImage(n_pe, n_ro);
  d.ground_truth.data = r.complex_block(pixels);

  r.expect_section(static_cast<std::uint64_t>(n_c) * pixels * kComplexBytes, "coil maps");
  for (long k = 0; k < n_c; ++k) {
    ComplexImage m(n_pe, n_ro);
    m.data = r.complex_block(pixels);
    d.maps.maps.push_back(std::move(m));
  }
  d.maps.normalized = true;
  for (long p = 0; p < n_pe * n_ro && d.maps.normalized; ++p) {
    double s = 0.0;
    for (auto const &m : d.maps.maps) {
      s += std::norm(m.data[static_cast<std::size_t>(p)]);
    }
    d.maps.normalized = std::abs(s - 1.0) < 1e-4;
  }

  long const m_rows = n_pe / rate;
  r.expect_section(static_cast<std::uint64_t>(4 * (1 + m_rows)), "mask");
  if (r.get<std::uint32_t>() != static_cast<std::uint32_t>(m_rows)) {
    r.fail("mask count does not match n_pe / rate");
  }
  d.mask = make_equispaced_mask(n_pe, rate, offset);
  for (long i = 0; i < m_rows; ++i) {
    if (r.get<std::uint32_t>() != static_cast<std::uint32_t>(d.mask.sampled_rows[static_cast<std::size_t>(i)])) {
      r.fail("mask rows are not the equispaced pattern of the header");
    }
  }

  r.expect_section(static_cast<std::uint64_t>(n_c * m_rows * n_ro) * kComplexBytes, "k-space");
  d.kspace.mask = d.mask;
  for (long k = 0; k < n_c; ++k) {
    ComplexImage c(m_rows, n_ro);
    c.data = r.complex_block(static_cast<std::size_t>(m_rows * n_ro));
    d.kspace.coils.push_back(std::move(c));
  }
  r.expect_end();
  return d;
}

namespace {

void put_metadata(Writer &w, NetworkSpec const &spec, std::vector<double> const &mu, bool shared, bool quantized,
                  std::size_t records)
{
  w.magic(kWeightMagic);
  w.put(static_cast<std::uint32_t>(spec.n_blocks));
  w.put(static_cast<std::uint32_t>(spec.channels));
  w.put(static_cast<std::uint32_t>(spec.kernel));
  w.put(spec.residual_scale);
  w.put(static_cast<std::uint32_t>(mu.size()));
  for (double m : mu) {
    w.put(m);
  }
  w.put(static_cast<std::uint8_t>(shared));
  w.put(static_cast<std::uint8_t>(quantized));
  w.put(static_cast<std::uint32_t>(records));
}

void put_record_head(Writer &w, std::string const &name, DType dtype, std::vector<long> const &shape)
{
  w.put(static_cast<std::uint32_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.put(static_cast<std::uint8_t>(dtype));
  w.put(static_cast<std::uint32_t>(shape.size()));
  for (long d : shape) {
    w.put(narrow(d, "tensor dimension"));
  }
}

} // namespace

std::string serialize_weights(WeightStore const &ws)
{
  Writer w;
  put_metadata(w, ws.spec, ws.mu, ws.shared_mu, false, ws.tensors.size());
  for (auto const &[name, t] : ws.tensors) {
    put_record_head(w, name, kF32, t.shape);
    w.bytes(t.data.data(), t.data.size() * sizeof(float));
  }
  return std::move(w.str());
}

std::string serialize_weights(QuantizedWeightStore const &qs)
{
  Writer w;
  put_metadata(w, qs.spec, qs.mu, qs.shared_mu, true, qs.weights.size() + qs.biases.size() + qs.activations.size());
  for (auto const &[name, t] : qs.weights) {
    put_record_head(w, name, kI8, t.shape);
    w.bytes(t.data.data(), t.data.size());
    w.put(t.qp.scale);
    w.put(static_cast<std::int32_t>(t.qp.zero_point));
  }
  for (auto const &[name, b] : qs.biases) {
    put_record_head(w, name, kI32, {static_cast<long>(b.data.size())});
    w.bytes(b.data.data(), b.data.size() * sizeof(std::int32_t));
    w.put(b.scale);
    w.put(std::int32_t{0});
  }
  for (auto const &[point, qp] : qs.activations) {
    put_record_head(w, "act." + point, kI8, {0});
    w.put(qp.scale);
    w.put(static_cast<std::int32_t>(qp.zero_point));
  }
  return std::move(w.str());
}

LoadedWeights deserialize_weights(std::string const &bytes)
{
  Reader r(bytes, "weight file");
  r.expect_magic(kWeightMagic);
  NetworkSpec spec;
  spec.n_blocks = static_cast<int>(r.get<std::uint32_t>());
  spec.channels = static_cast<int>(r.get<std::uint32_t>());
  spec.kernel = static_cast<int>(r.get<std::uint32_t>());
  spec.residual_scale = r.get<double>();
  auto const n_mu = r.get<std::uint32_t>();
  if (n_mu > 1u << 20) {
    r.fail("implausible mu count");
  }
  std::vector<double> mu(n_mu);
  for (auto &m : mu) {
    m = r.get<double>();
  }
  bool const shared = r.get<std::uint8_t>() != 0;
  bool const quantized = r.get<std::uint8_t>() != 0;
  auto const records = r.get<std::uint32_t>();
  try {
    spec.validate();
  } catch (std::exception const &e) {
    r.fail(e.what());
  }

  WeightStore fw;
  QuantizedWeightStore qw;
  fw.spec = qw.spec = spec;
  fw.mu = qw.mu = mu;
  fw.shared_mu = qw.shared_mu = shared;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < records; ++i) {
    auto const name_len = r.get<std::uint32_t>();
    if (name_len > 4096) {
      r.fail("implausible name length");
    }
    std::string name(name_len, '\0');
    r.raw(name.data(), name_len);
    if (!seen.insert(name).second) {
      r.fail("duplicate tensor '" + name + "'");
    }
    auto const dtype = r.get<std::uint8_t>();
    auto const ndim = r.get<std::uint32_t>();
    if (ndim > 8) {
      r.fail("tensor '" + name + "' has implausible rank");
    }
    std::vector<long> shape(ndim);
    std::uint64_t numel = 1;
    for (auto &d : shape) {
      d = r.get<std::uint32_t>();
      numel *= static_cast<std::uint64_t>(d);
    }
    if (numel > bytes.size()) {
      r.fail("tensor '" + name + "' is larger than the file");
    }
    if (dtype == kF32 && !quantized) {
      Tensor t(shape);
      r.raw(t.data.data(), t.data.size() * sizeof(float));
      fw.tensors.emplace(name, std::move(t));
    } else if (dtype == kI8 && quantized) {
      std::vector<std::int8_t> data(numel);
      r.raw(data.data(), data.size());
      QParams qp;
      qp.scale = r.get<double>();
      qp.zero_point = r.get<std::int32_t>();
      if (name.starts_with("act.")) {
        if (numel != 0) {
          r.fail("activation record '" + name + "' carries data");
        }
        qp.scheme = QScheme::Affine;
        qw.activations.emplace(name.substr(4), qp);
      } else {
        qp.scheme = QScheme::Symmetric;
        qw.weights.emplace(name, QTensor{shape, std::move(data), qp});
      }
      try {
        qp.validate();
      } catch (std::exception const &e) {
        r.fail("tensor '" + name + "': " + e.what());
      }
    } else if (dtype == kI32 && quantized) {
      QBias b;
      b.data.resize(numel);
      r.raw(b.data.data(), b.data.size() * sizeof(std::int32_t));
      b.scale = r.get<double>();
      if (r.get<std::int32_t>() != 0 || !(b.scale > 0.0)) {
        r.fail("bias '" + name + "' has invalid quantization parameters");
      }
      qw.biases.emplace(name, std::move(b));
    } else {
      r.fail("tensor '" + name + "' has dtype " + std::to_string(dtype) + " not allowed in this file");
    }
  }
  r.expect_end();

  LoadedWeights out;
  try {
    if (quantized) {
      qw.validate();
      out.int8 = std::move(qw);
    } else {
      fw.validate();
      out.fp32 = std::move(fw);
    }
  } catch (DataError const &) {
    throw;
  } catch (std::exception const &e) {
    throw DataError(std::string("weight file: ") + e.what());
  }
  return out;
}

std::string serialize_image(ComplexImage const &img)
{
  Writer w;
  w.magic(kImageMagic);
  w.put(narrow(img.n_pe, "n_pe"));
  w.put(narrow(img.n_ro, "n_ro"));
  w.put(static_cast<std::uint64_t>(img.data.size() * kComplexBytes));
  w.complex_block(img.data);
  return std::move(w.str());
}

ComplexImage deserialize_image(std::string const &bytes)
{
  Reader r(bytes, "image file");
  r.expect_magic(kImageMagic);
  long const n_pe = r.get<std::uint32_t>();
  long const n_ro = r.get<std::uint32_t>();
  auto const pixels = static_cast<std::uint64_t>(n_pe * n_ro);
  r.expect_section(pixels * kComplexBytes, "pixels");
  ComplexImage img(n_pe, n_ro);
  img.data = r.complex_block(pixels);
  r.expect_end();
  return img;
}

std::string read_file(std::filesystem::path const &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open '" + path.string() + "'");
  }
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) {
    throw DataError("error reading '" + path.string() + "'");
  }
  return os.str();
}

void write_file(std::filesystem::path const &path, std::string const &bytes)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DataError("cannot create '" + path.string() + "'");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) {
    throw DataError("error writing '" + path.string() + "'");
  }
}

void write_dataset(std::filesystem::path const &path, Dataset const &d) { write_file(path, serialize_dataset(d)); }
Dataset read_dataset(std::filesystem::path const &path) { return deserialize_dataset(read_file(path)); }
void write_weights(std::filesystem::path const &path, WeightStore const &w) { write_file(path, serialize_weights(w)); }
void write_weights(std::filesystem::path const &path, QuantizedWeightStore const &w)
{
  write_file(path, serialize_weights(w));
}
LoadedWeights read_weights(std::filesystem::path const &path) { return deserialize_weights(read_file(path)); }
void write_image(std::filesystem::path const &path, ComplexImage const &img) { write_file(path, serialize_image(img)); }
ComplexImage read_image(std::filesystem::path const &path) { return deserialize_image(read_file(path)); }

} // namespace pdmr
