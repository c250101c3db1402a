// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "bwarea/random.hpp"

namespace bwarea {

class DataError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Byte-level vocabulary: ids 0..255 are raw bytes, followed by three
/// special ids. Encoding never produces a special id.
class Vocabulary {
   public:
    static constexpr int kPad = 256;
    static constexpr int kBegin = 257;
    static constexpr int kEnd = 258;
    static constexpr std::size_t kSize = 259;
    static constexpr std::size_t kByteCount = 256;

    static std::size_t size() { return kSize; }
    static bool is_special(int id) { return id >= kPad && id < static_cast<int>(kSize); }

    static std::vector<int> encode(std::string_view text) {
        std::vector<int> ids;
        ids.reserve(text.size());
        for (unsigned char c : text) ids.push_back(static_cast<int>(c));
        return ids;
    }

    /// Specials render as nothing; ids outside the vocabulary throw.
    static std::string decode(std::span<const int> ids) {
        std::string out;
        out.reserve(ids.size());
        for (int id : ids) {
            if (id < 0 || id >= static_cast<int>(kSize))
                throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
            if (id < static_cast<int>(kByteCount)) out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
        }
        return out;
    }

    static std::string token_name(int id) {
        switch (id) {
            case kPad: return "<pad>";
            case kBegin: return "<bos>";
            case kEnd: return "<eos>";
            default: return decode(std::span<const int>(&id, 1));
        }
    }
};

/// B sequences of seq_len tokens, row-major.
struct TokenBatch {
    std::size_t batch = 0;
    std::size_t seq_len = 0;
    std::vector<int> tokens;

    int at(std::size_t b, std::size_t t) const { return tokens[b * seq_len + t]; }
    std::span<const int> row(std::size_t b) const { return std::span<const int>(tokens).subspan(b * seq_len, seq_len); }
    bool operator==(const TokenBatch&) const = default;
};

/// Prompt/answer rows padded to a common length. mask[b*T + i] is 1 exactly
/// for answer positions (0-based i with prompt_length <= i <= last answer token).
struct SftBatch {
    TokenBatch tokens;
    std::vector<std::size_t> prompt_lengths;
    std::vector<float> mask;
};

// ---------------------------------------------------------------- corpus I/O

/// Concatenates documents, appending the end id after each one.
inline std::vector<int> tokenize_documents(const std::vector<std::string>& docs) {
    std::vector<int> out;
    for (const auto& d : docs) {
        auto ids = Vocabulary::encode(d);
        out.insert(out.end(), ids.begin(), ids.end());
        out.push_back(Vocabulary::kEnd);
    }
    return out;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Reads a UTF-8 text corpus. With `newline_documents` every non-empty line
/// is a document; otherwise the whole file is one.
inline std::vector<int> load_text_corpus(const std::filesystem::path& path, bool newline_documents = true) {
    const std::string text = read_file(path);
    std::vector<std::string> docs;
    if (newline_documents) {
        std::istringstream ss(text);
        std::string line;
        while (std::getline(ss, line))
            if (!line.empty()) docs.push_back(line);
    } else {
        docs.push_back(text);
    }
    return tokenize_documents(docs);
}

namespace detail {
inline constexpr char kTokenMagic[4] = {'B', 'W', 'T', 'K'};
inline constexpr std::uint32_t kTokenFormatVersion = 1;

template <typename U>
void put_le(std::ostream& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.put(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(std::istream& in) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        const int c = in.get();
        if (c == EOF) throw DataError("unexpected end of token file");
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return static_cast<U>(v);
}
}  // namespace detail

/// Pre-tokenized corpus: "BWTK", u32 version, u32 token width in bytes (2),
/// u64 count, then little-endian ids.
inline void save_token_file(const std::filesystem::path& path, std::span<const int> ids) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(detail::kTokenMagic, 4);
    detail::put_le<std::uint32_t>(out, detail::kTokenFormatVersion);
    detail::put_le<std::uint32_t>(out, 2);
    detail::put_le<std::uint64_t>(out, ids.size());
    for (int id : ids) detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(id));
}

inline std::vector<int> load_token_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || !std::equal(magic, magic + 4, detail::kTokenMagic))
        throw DataError(path.string() + ": not a token file");
    const auto version = detail::get_le<std::uint32_t>(in);
    if (version != detail::kTokenFormatVersion) throw DataError(path.string() + ": unsupported token file version");
    const auto width = detail::get_le<std::uint32_t>(in);
    if (width != 2 && width != 4) throw DataError(path.string() + ": unsupported token width");
    const auto count = detail::get_le<std::uint64_t>(in);
    std::vector<int> ids(count);
    for (auto& id : ids) {
        id = width == 2 ? detail::get_le<std::uint16_t>(in) : static_cast<int>(detail::get_le<std::uint32_t>(in));
        if (id >= static_cast<int>(Vocabulary::size())) throw DataError(path.string() + ": token id out of range");
    }
    return ids;
}

/// Loads either format, picked by the ".tok" extension.
inline std::vector<int> load_corpus(const std::filesystem::path& path) {
    return path.extension() == ".tok" ? load_token_file(path) : load_text_corpus(path);
}

// ---------------------------------------------------------------- batching

/// Starts of the contiguous, non-overlapping windows of length T, in corpus order.
inline std::vector<std::size_t> window_starts(std::size_t corpus_len, std::size_t seq_len) {
    std::vector<std::size_t> starts;
    for (std::size_t s = 0; s + seq_len <= corpus_len; s += seq_len) starts.push_back(s);
    return starts;
}

/// One epoch of pre-training batches: windows shuffled by `seed`, grouped B at
/// a time (the last batch may be smaller).
inline std::vector<TokenBatch> segment_batches(std::span<const int> corpus, std::size_t seq_len, std::size_t batch,
                                               std::uint64_t seed) {
    if (seq_len == 0 || batch == 0) throw DataError("segment length and batch size must be positive");
    if (corpus.size() < seq_len)
        throw DataError("corpus has " + std::to_string(corpus.size()) + " tokens, fewer than the segment length " +
                        std::to_string(seq_len));
    auto starts = window_starts(corpus.size(), seq_len);
    Rng rng(seed);
    std::shuffle(starts.begin(), starts.end(), rng.engine());
    std::vector<TokenBatch> out;
    for (std::size_t i = 0; i < starts.size(); i += batch) {
        TokenBatch b;
        b.batch = std::min(batch, starts.size() - i);
        b.seq_len = seq_len;
        for (std::size_t j = 0; j < b.batch; ++j)
            b.tokens.insert(b.tokens.end(), corpus.begin() + static_cast<std::ptrdiff_t>(starts[i + j]),
                            corpus.begin() + static_cast<std::ptrdiff_t>(starts[i + j] + seq_len));
        out.push_back(std::move(b));
    }
    return out;
}

/// Endless stream of full-size batches; each epoch reshuffles with seed + epoch.
class BatchStream {
   public:
    BatchStream(std::vector<int> corpus, std::size_t seq_len, std::size_t batch, std::uint64_t seed)
        : corpus_(std::move(corpus)), seq_len_(seq_len), batch_(batch), seed_(seed) {
        refill();
    }

    TokenBatch next() {
        if (cursor_ >= epoch_.size()) {
            ++epoch_index_;
            refill();
        }
        return epoch_[cursor_++];
    }

    std::size_t epoch() const { return epoch_index_; }
    std::size_t batches_per_epoch() const { return epoch_.size(); }

   private:
    void refill() {
        epoch_ = segment_batches(corpus_, seq_len_, batch_, seed_ + epoch_index_);
        // keep only full batches when more than one exists, so every step sees B rows
        if (epoch_.size() > 1 && epoch_.back().batch < batch_) epoch_.pop_back();
        cursor_ = 0;
    }

    std::vector<int> corpus_;
    std::size_t seq_len_, batch_;
    std::uint64_t seed_;
    std::size_t epoch_index_ = 0;
    std::size_t cursor_ = 0;
    std::vector<TokenBatch> epoch_;
};

/// Replaces exactly round(rate * B * T) distinct positions with a different,
/// uniformly drawn byte token.
inline TokenBatch corrupt_tokens(const TokenBatch& batch, double rate, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("corruption rate must lie in [0, 1]");
    TokenBatch out = batch;
    const std::size_t n = batch.tokens.size();
    const auto count = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
    Rng rng(seed);
    std::vector<std::size_t> positions(n);
    std::iota(positions.begin(), positions.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) std::swap(positions[i], positions[i + rng.index(n - i)]);
    for (std::size_t i = 0; i < count; ++i) {
        int& tok = out.tokens[positions[i]];
        if (Vocabulary::is_special(tok)) {
            tok = static_cast<int>(rng.index(Vocabulary::kByteCount));
        } else {
            auto r = static_cast<int>(rng.index(Vocabulary::kByteCount - 1));
            tok = r >= tok ? r + 1 : r;
        }
    }
    return out;
}

// ---------------------------------------------------------------- SFT data

struct SftRecord {
    std::string prompt;
    std::string answer;
    bool operator==(const SftRecord&) const = default;
};

/// One JSON object per line with "prompt" and "answer" fields.
inline std::vector<SftRecord> load_sft_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<SftRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = nlohmann::json::parse(line);
            out.push_back({j.at("prompt").get<std::string>(), j.at("answer").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline void save_sft_records(const std::filesystem::path& path, const std::vector<SftRecord>& records) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& r : records) out << nlohmann::json{{"prompt", r.prompt}, {"answer", r.answer}}.dump() << '\n';
}

/// Builds one batch from records: prompt ids, answer ids, then the end id,
/// padded to max_len. Rows that do not fit or have no answer are rejected.
inline SftBatch make_sft_batch(std::span<const SftRecord> records, std::size_t max_len) {
    SftBatch out;
    out.tokens.batch = records.size();
    out.tokens.seq_len = max_len;
    out.tokens.tokens.assign(records.size() * max_len, Vocabulary::kPad);
    out.mask.assign(records.size() * max_len, 0.0f);
    for (std::size_t b = 0; b < records.size(); ++b) {
        auto prompt = Vocabulary::encode(records[b].prompt);
        auto answer = Vocabulary::encode(records[b].answer);
        answer.push_back(Vocabulary::kEnd);
        if (prompt.empty()) throw DataError("SFT record " + std::to_string(b) + " has an empty prompt");
        if (prompt.size() + answer.size() > max_len)
            throw DataError("SFT record of " + std::to_string(prompt.size() + answer.size()) +
                            " tokens exceeds max length " + std::to_string(max_len));
        std::copy(prompt.begin(), prompt.end(), out.tokens.tokens.begin() + static_cast<std::ptrdiff_t>(b * max_len));
        std::copy(answer.begin(), answer.end(),
                  out.tokens.tokens.begin() + static_cast<std::ptrdiff_t>(b * max_len + prompt.size()));
        for (std::size_t i = 0; i < answer.size(); ++i) out.mask[b * max_len + prompt.size() + i] = 1.0f;
        out.prompt_lengths.push_back(prompt.size());
    }
    return out;
}

/// Shuffled SFT batches for one epoch.
inline std::vector<SftBatch> sft_batches(const std::vector<SftRecord>& records, std::size_t max_len,
                                         std::size_t batch, std::uint64_t seed) {
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng.engine());
    std::vector<SftBatch> out;
    for (std::size_t i = 0; i < order.size(); i += batch) {
        std::vector<SftRecord> chunk;
        for (std::size_t j = i; j < std::min(order.size(), i + batch); ++j) chunk.push_back(records[order[j]]);
        out.push_back(make_sft_batch(chunk, max_len));
    }
    return out;
}

/// An all-ones mask over every position of a pre-training batch, so the SFT
/// code path reduces to the pre-training one.
inline SftBatch full_mask_batch(const TokenBatch& batch) {
    SftBatch out;
    out.tokens = batch;
    out.prompt_lengths.assign(batch.batch, 0);
    out.mask.assign(batch.tokens.size(), 1.0f);
    return out;
}

}  // namespace bwarea
