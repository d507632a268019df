#include "svip/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "svip/errors.hpp"

namespace svip {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'V', 'I', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  template <typename T>
  T get(const char* what) {
    T v{};
    read(reinterpret_cast<char*>(&v), sizeof v, what);
    return v;
  }

  std::string get_string(const char* what) {
    const auto n = get<std::uint64_t>(what);
    if (n > (1u << 26)) fail(std::string("implausible length for ") + what);
    std::string s(n, '\0');
    read(s.data(), n, what);
    return s;
  }

  void read(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      fail(std::string("truncated while reading ") + what);
    }
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError(path_ + ": " + msg);
  }

 private:
  std::istream& in_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const std::string& path, const SvipModel& model,
                     const TrainConfig& train) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put_string(out, to_settings_text(model.vit) + to_settings_text(train));
  const auto state = model.state();
  put<std::uint64_t>(out, state.size());
  for (const auto& [name, t] : state) {
    put_string(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    const auto data = t.data();
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size_bytes()));
  }
  if (!out) throw DataError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  Reader r(in, path);
  char magic[4];
  r.read(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) r.fail("bad magic, not an SVIP checkpoint");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) {
    r.fail("unsupported checkpoint version " + std::to_string(version));
  }

  Checkpoint ck;
  auto settings = Settings::parse_text(r.get_string("config"), path);
  apply(settings, ck.vit);
  apply(settings, ck.train);
  settings.finish();

  std::map<std::string, Tensor> tensors;
  const auto count = r.get<std::uint64_t>("tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    auto name = r.get_string("tensor name");
    const auto rank = r.get<std::uint32_t>("tensor rank");
    if (rank > 8) r.fail("tensor " + name + " has implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint64_t>("tensor extent");
    if (shape_numel(shape) > (std::size_t{1} << 28)) {
      r.fail("tensor " + name + " has implausible size");
    }
    std::vector<double> values(shape_numel(shape));
    r.read(reinterpret_cast<char*>(values.data()), values.size() * sizeof(double),
           "tensor values");
    tensors[name] = Tensor::from(shape, std::move(values));
  }

  auto words = tensors.find("w2p.words");
  if (words == tensors.end()) r.fail("missing tensor w2p.words");
  try {
    ck.model = SvipModel::create(ck.vit, words->second, 0);
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
  for (auto& [name, t] : ck.model.state()) {
    auto it = tensors.find(name);
    if (it == tensors.end()) r.fail("missing tensor " + name);
    if (it->second.shape() != t.shape()) {
      r.fail("tensor " + name + " has shape " + shape_str(it->second.shape()) +
             ", configuration expects " + shape_str(t.shape()));
    }
    auto src = it->second.data();
    auto dst = t.mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
    check_finite(dst, ("checkpoint tensor " + name).c_str());
    tensors.erase(it);
  }
  if (!tensors.empty()) r.fail("unknown tensor " + tensors.begin()->first);
  return ck;
}

}  // namespace svip
