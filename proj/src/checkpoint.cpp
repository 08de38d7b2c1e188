// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#include "densecl/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "densecl/common.hpp"

namespace densecl::checkpoint {

namespace {

constexpr char kMagic[4] = {'D', 'C', 'L', 'K'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_le(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T read_le(const std::string& in, size_t& pos, const std::string& what) {
  DCL_CHECK(pos + sizeof(T) <= in.size(), DataError,
            "checkpoint: truncated while reading " + what);
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

size_t dtype_size(DType t) {
  switch (t) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u32: return 4;
    case DType::u64: return 8;
  }
  return 0;
}

const char* dtype_name(DType t) {
  switch (t) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::u32: return "u32";
    case DType::u64: return "u64";
  }
  return "?";
}

int64_t Entry::numel() const {
  int64_t n = 1;
  for (int64_t d : dims) n *= d;
  return n;
}

void Archive::put(const std::string& name, const Tensor& t) {
  Entry e;
  e.dtype = DType::f32;
  e.dims = t.shape();
  e.bytes.resize(static_cast<size_t>(t.numel()) * 4);
  std::memcpy(e.bytes.data(), t.data(), e.bytes.size());
  entries_[name] = std::move(e);
}

void Archive::put_u64(const std::string& name, const std::vector<uint64_t>& v) {
  Entry e;
  e.dtype = DType::u64;
  e.dims = {static_cast<int64_t>(v.size())};
  e.bytes.resize(v.size() * 8);
  std::memcpy(e.bytes.data(), v.data(), e.bytes.size());
  entries_[name] = std::move(e);
}

void Archive::put_scalar_u64(const std::string& name, uint64_t v) {
  put_u64(name, std::vector<uint64_t>{v});
}

bool Archive::has(const std::string& name) const { return entries_.count(name) > 0; }

const Entry& Archive::at(const std::string& name) const {
  auto it = entries_.find(name);
  DCL_CHECK(it != entries_.end(), DataError, "checkpoint: missing field '" + name + "'");
  return it->second;
}

Tensor Archive::get(const std::string& name) const {
  const Entry& e = at(name);
  DCL_CHECK(e.dtype == DType::f32, DataError,
            "checkpoint: field '" + name + "' has dtype " + dtype_name(e.dtype) +
                ", expected f32");
  Tensor t(e.dims);
  std::memcpy(t.data(), e.bytes.data(), e.bytes.size());
  return t;
}

std::vector<uint64_t> Archive::get_u64(const std::string& name) const {
  const Entry& e = at(name);
  DCL_CHECK(e.dtype == DType::u64, DataError,
            "checkpoint: field '" + name + "' has dtype " + dtype_name(e.dtype) +
                ", expected u64");
  std::vector<uint64_t> v(static_cast<size_t>(e.numel()));
  std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
  return v;
}

uint64_t Archive::get_scalar_u64(const std::string& name) const {
  auto v = get_u64(name);
  DCL_CHECK(v.size() == 1, DataError, "checkpoint: field '" + name + "' is not a scalar");
  return v[0];
}

void Archive::save(const std::string& path) const {
  std::string out;
  out.append(kMagic, 4);
  write_le<uint32_t>(out, kVersion);
  write_le<uint64_t>(out, entries_.size());
  uint64_t offset = 0;
  for (const auto& [name, e] : entries_) {
    write_le<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.append(name);
    out.push_back(static_cast<char>(e.dtype));
    write_le<uint32_t>(out, static_cast<uint32_t>(e.dims.size()));
    for (int64_t d : e.dims) write_le<uint64_t>(out, static_cast<uint64_t>(d));
    write_le<uint64_t>(out, offset);
    offset += e.bytes.size();
  }
  write_le<uint64_t>(out, offset);
  for (const auto& [name, e] : entries_)
    out.append(reinterpret_cast<const char*>(e.bytes.data()), e.bytes.size());

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  DCL_CHECK(f.good(), IoError, "checkpoint: cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  f.flush();
  DCL_CHECK(f.good(), IoError, "checkpoint: write to '" + path + "' failed");
}

Archive Archive::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  DCL_CHECK(f.good(), IoError, "checkpoint: cannot open '" + path + "'");
  std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  size_t pos = 0;
  DCL_CHECK(in.size() >= 4 && std::memcmp(in.data(), kMagic, 4) == 0, DataError,
            "checkpoint: bad magic (not a DCLK file)");
  pos = 4;
  uint32_t version = read_le<uint32_t>(in, pos, "version");
  DCL_CHECK(version == kVersion, DataError,
            "checkpoint: unsupported format version " + std::to_string(version));
  uint64_t count = read_le<uint64_t>(in, pos, "entry count");

  struct Pending {
    std::string name;
    DType dtype;
    std::vector<int64_t> dims;
    uint64_t offset;
  };
  std::vector<Pending> pend;
  pend.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    uint32_t nlen = read_le<uint32_t>(in, pos, "name length");
    DCL_CHECK(pos + nlen <= in.size(), DataError, "checkpoint: truncated entry name");
    std::string name = in.substr(pos, nlen);
    pos += nlen;
    uint8_t dt = read_le<uint8_t>(in, pos, "dtype of '" + name + "'");
    DCL_CHECK(dt <= 3, DataError, "checkpoint: field '" + name + "' has invalid dtype tag");
    uint32_t rank = read_le<uint32_t>(in, pos, "rank of '" + name + "'");
    DCL_CHECK(rank <= 8, DataError, "checkpoint: field '" + name + "' has invalid rank");
    std::vector<int64_t> dims(rank);
    for (auto& d : dims)
      d = static_cast<int64_t>(read_le<uint64_t>(in, pos, "dims of '" + name + "'"));
    uint64_t off = read_le<uint64_t>(in, pos, "offset of '" + name + "'");
    pend.push_back({std::move(name), static_cast<DType>(dt), std::move(dims), off});
  }
  uint64_t data_size = read_le<uint64_t>(in, pos, "data size");
  DCL_CHECK(pos + data_size <= in.size(), DataError, "checkpoint: truncated data section");

  Archive a;
  for (auto& p : pend) {
    Entry e;
    e.dtype = p.dtype;
    e.dims = p.dims;
    uint64_t nbytes = static_cast<uint64_t>(e.numel()) * dtype_size(e.dtype);
    DCL_CHECK(p.offset + nbytes <= data_size, DataError,
              "checkpoint: field '" + p.name + "' data out of bounds");
    e.bytes.resize(nbytes);
    std::memcpy(e.bytes.data(), in.data() + pos + p.offset, nbytes);
    a.entries_[p.name] = std::move(e);
  }
  return a;
}

}  // namespace densecl::checkpoint
