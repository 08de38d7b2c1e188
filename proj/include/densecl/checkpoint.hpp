// Copyright (c) 2026 the densecl authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "densecl/tensor.hpp"

namespace densecl::checkpoint {

// File layout (all integers little-endian):
//   magic "DCLK" | version u32 | entry count u64
//   per entry: name_len u32, name bytes, dtype u8, rank u32, dims u64[rank],
//              offset u64 (into the data section)
//   data size u64 | raw data blobs
enum class DType : uint8_t { f32 = 0, f64 = 1, u32 = 2, u64 = 3 };

size_t dtype_size(DType t);
const char* dtype_name(DType t);

struct Entry {
  DType dtype = DType::f32;
  std::vector<int64_t> dims;
  std::vector<uint8_t> bytes;

  int64_t numel() const;
};

/// In-memory named-tensor archive. Entries are kept name-sorted, so saving
/// the same contents always produces identical bytes.
class Archive {
 public:
  void put(const std::string& name, const Tensor& t);
  void put_u64(const std::string& name, const std::vector<uint64_t>& v);
  void put_scalar_u64(const std::string& name, uint64_t v);

  bool has(const std::string& name) const;
  const Entry& at(const std::string& name) const;  // throws DataError naming the field

  Tensor get(const std::string& name) const;       // f32 entries
  std::vector<uint64_t> get_u64(const std::string& name) const;
  uint64_t get_scalar_u64(const std::string& name) const;

  const std::map<std::string, Entry>& entries() const { return entries_; }

  void save(const std::string& path) const;
  static Archive load(const std::string& path);

 private:
  std::map<std::string, Entry> entries_;
};

}  // namespace densecl::checkpoint
