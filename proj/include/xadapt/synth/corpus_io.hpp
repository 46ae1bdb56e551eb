// Copyright 2026 The xadapt Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// On-disk corpus. One directory per language:
//
//   <dir>/spec.json            LanguageSpec as JSON
//   <dir>/{train,valid,test}.bin
//
// Split files (integers little-endian):
//
//   bytes 0..7   magic "XADPCORP"
//   bytes 8..11  uint32 version (1)
//   bytes 12..19 uint64 record count
//   records      uint64 record byte length N, then N bytes:
//                  uint32 id length, id bytes (UTF-8),
//                  uint32 frames, uint32 dim, frames*dim float64,
//                  uint32 token count, token ids as int32

#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "xadapt/synth/language.hpp"

namespace xadapt::synth {

class CorpusError : public Error {
 public:
  using Error::Error;
};

namespace io {

inline constexpr std::string_view kMagic = "XADPCORP";
inline constexpr std::uint32_t kVersion = 1;

inline void put(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::uint64_t get(int bytes) {
    if (pos_ + std::size_t(bytes) > in_.size()) throw CorpusError("corpus: truncated record");
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += std::size_t(bytes);
    return v;
  }
  std::string_view take(std::size_t n) {
    if (pos_ + n > in_.size()) throw CorpusError("corpus: truncated record");
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace io

inline std::string encode_split(const TaskBatch& batch) {
  std::string out(io::kMagic);
  io::put(out, io::kVersion, 4);
  io::put(out, batch.size(), 8);
  for (const auto& u : batch) {
    std::string rec;
    io::put(rec, u.utt_id.size(), 4);
    rec.append(u.utt_id);
    io::put(rec, u.features.frames, 4);
    io::put(rec, u.features.dim, 4);
    for (double v : u.features.values) io::put(rec, std::bit_cast<std::uint64_t>(v), 8);
    io::put(rec, u.tokens.size(), 4);
    for (int t : u.tokens) io::put(rec, static_cast<std::uint32_t>(t), 4);
    io::put(out, rec.size(), 8);
    out.append(rec);
  }
  return out;
}

inline TaskBatch decode_split(std::string_view bytes) {
  io::Reader r(bytes);
  if (r.take(8) != io::kMagic) throw CorpusError("corpus: bad magic");
  if (r.get(4) != io::kVersion) throw CorpusError("corpus: unsupported version");
  const auto n = r.get(8);
  TaskBatch out;
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto len = r.get(8);
    io::Reader rec(r.take(len));
    Utterance u;
    u.utt_id = std::string(rec.take(rec.get(4)));
    u.features.frames = rec.get(4);
    u.features.dim = rec.get(4);
    u.features.values.resize(u.features.frames * u.features.dim);
    for (auto& v : u.features.values) v = std::bit_cast<double>(rec.get(8));
    u.tokens.resize(rec.get(4));
    for (auto& t : u.tokens) t = static_cast<std::int32_t>(static_cast<std::uint32_t>(rec.get(4)));
    if (!rec.done()) throw CorpusError("corpus: record length mismatch for " + u.utt_id);
    out.push_back(std::move(u));
  }
  if (!r.done()) throw CorpusError("corpus: trailing bytes");
  return out;
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw CorpusError("corpus: cannot write " + p.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw CorpusError("corpus: cannot read " + p.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void save_language(const std::filesystem::path& dir, const LanguageSpec& spec, const Corpus& c) {
  std::filesystem::create_directories(dir);
  write_file(dir / "spec.json", nlohmann::json(spec).dump(2) + "\n");
  write_file(dir / "train.bin", encode_split(c.train));
  write_file(dir / "valid.bin", encode_split(c.valid));
  write_file(dir / "test.bin", encode_split(c.test));
}

inline LanguageSpec load_spec(const std::filesystem::path& dir) {
  try {
    return nlohmann::json::parse(read_file(dir / "spec.json")).get<LanguageSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw CorpusError("corpus: malformed " + (dir / "spec.json").string() + ": " + e.what());
  }
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw CorpusError("corpus: missing directory " + dir.string());
  Corpus c;
  c.train = decode_split(read_file(dir / "train.bin"));
  c.valid = decode_split(read_file(dir / "valid.bin"));
  c.test = decode_split(read_file(dir / "test.bin"));
  return c;
}

}  // namespace xadapt::synth
