#include "hgfrenet/parameters.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include "hgfrenet/error.hpp"

namespace hgf {

ParameterSet::Entry& ParameterSet::insert(std::string name, Tensor init, bool trainable) {
  if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  entries_.push_back(Entry{std::move(name), Var(std::move(init), trainable), trainable});
  return entries_.back();
}

Var ParameterSet::add(std::string name, Tensor init) {
  return insert(std::move(name), std::move(init), true).var;
}

Var ParameterSet::add_buffer(std::string name, Tensor init) {
  return insert(std::move(name), std::move(init), false).var;
}

std::vector<Var> ParameterSet::trainable() const {
  std::vector<Var> out;
  for (const auto& e : entries_) {
    if (e.trainable) out.push_back(e.var);
  }
  return out;
}

const ParameterSet::Entry* ParameterSet::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::size_t ParameterSet::trainable_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.trainable) n += e.var.value().size();
  }
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f32(std::string& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::filesystem::path& path) : bytes_(bytes), path_(path) {}

  bool at_end() const { return pos_ == bytes_.size(); }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw TruncatedError("checkpoint " + path_.string() + " truncated at byte " +
                           std::to_string(pos_));
    }
  }

 private:
  const std::string& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path) {
  std::string out(kCheckpointMagic);
  for (const auto& e : params.entries()) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    const Shape& s = e.var.shape();
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    for (auto d : s) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : e.var.value().data()) put_f32(out, v);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("failed writing checkpoint " + path.string());
}

void load_checkpoint(ParameterSet& params, const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.compare(0, kCheckpointMagic.size(), kCheckpointMagic) != 0) {
    throw BadMagicError("checkpoint " + path.string() + " does not start with HGFW1");
  }
  const std::string body = bytes.substr(kCheckpointMagic.size());
  Reader in(body, path);

  std::unordered_map<std::string, const ParameterSet::Entry*> by_name;
  for (const auto& e : params.entries()) by_name.emplace(e.name, &e);

  while (!in.at_end()) {
    const std::uint32_t name_len = in.u32();
    const std::string name = in.str(name_len);
    const std::uint32_t rank = in.u32();
    if (rank > 8) throw ShapeOverflowError("checkpoint record '" + name + "' has rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = in.u32();
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint has unknown parameter '" + name + "'");
    Var var = it->second->var;
    if (var.shape() != shape) {
      throw DataError("checkpoint parameter '" + name + "' has shape " + shape_str(shape) +
                      ", model expects " + shape_str(var.shape()));
    }
    Tensor& value = var.mutable_value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      value[i] = static_cast<double>(std::bit_cast<float>(in.u32()));
    }
    by_name.erase(it);
  }
  if (!by_name.empty()) {
    throw DataError("checkpoint " + path.string() + " is missing parameter '" +
                    by_name.begin()->first + "'");
  }
}

void round_to_checkpoint_precision(ParameterSet& params) {
  for (const auto& e : params.entries()) {
    Var v = e.var;
    for (auto& x : v.mutable_value().data()) x = static_cast<double>(static_cast<float>(x));
  }
}

}  // namespace hgf
