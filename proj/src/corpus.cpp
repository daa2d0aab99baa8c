#include "topicflow/corpus.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "binary_io.hpp"
#include "topicflow/digest.hpp"
#include "topicflow/error.hpp"

namespace topicflow::corpus {
namespace {

using U32 = std::u32string;

[[noreturn]] void fail(const std::string& code, const std::string& msg) {
  throw Error("corpus", code, msg);
}

std::string to_utf8(const U32& s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t c : s) {
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else if (c < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else if (c < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (c >> 12)));
      out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (c >> 18)));
      out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

U32 code_points(const icu::UnicodeString& s) {
  U32 out;
  out.reserve(static_cast<std::size_t>(s.length()));
  for (int32_t i = 0; i < s.length(); i = s.moveIndex32(i, 1))
    out.push_back(static_cast<char32_t>(s.char32At(i)));
  return out;
}

// Stage 1: NFKC, then full lowercase mapping.
U32 normalize_lower(const std::string& utf8) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfkc = icu::Normalizer2::getNFKCInstance(status);
  if (U_FAILURE(status)) fail("UnicodeFailure", "NFKC normalizer unavailable");
  icu::UnicodeString s = nfkc->normalize(icu::UnicodeString::fromUTF8(utf8), status);
  if (U_FAILURE(status)) fail("UnicodeFailure", "normalization failed");
  s.toLower(icu::Locale::getRoot());
  return code_points(s);
}

U32 decode(const std::string& utf8) { return code_points(icu::UnicodeString::fromUTF8(utf8)); }

bool is_letter(char32_t c) { return u_isalpha(static_cast<UChar32>(c)) != 0; }

std::size_t length_cp(const std::string& utf8) {
  std::size_t n = 0;
  for (unsigned char c : utf8)
    if ((c & 0xC0) != 0x80) ++n;
  return n;
}

// Stage 2: replace each phrase occurrence by a space. An occurrence must not
// extend a word: where the phrase starts (ends) with a letter, the preceding
// (following) character must not be a letter.
void delete_phrases(U32& text, const std::vector<U32>& phrases) {
  for (const U32& phrase : phrases) {
    if (phrase.empty()) continue;
    std::size_t pos = 0;
    while ((pos = text.find(phrase, pos)) != U32::npos) {
      const std::size_t end = pos + phrase.size();
      const bool left_ok = pos == 0 || !is_letter(phrase.front()) || !is_letter(text[pos - 1]);
      const bool right_ok = end == text.size() || !is_letter(phrase.back()) || !is_letter(text[end]);
      if (left_ok && right_ok) {
        text.replace(pos, phrase.size(), U" ");
        pos += 1;
      } else {
        pos += 1;
      }
    }
  }
}

// Stage 3: candidate words are maximal runs of letters and the join character.
// A hyphen survives only between two such characters; hyphenated words are
// split after collocation matching.
std::vector<U32> split_words(const U32& text, char32_t join_char) {
  auto keep = [&](char32_t c) { return is_letter(c) || c == join_char; };
  std::vector<U32> words;
  U32 cur;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char32_t c = text[i];
    if (keep(c)) {
      cur.push_back(c);
    } else if (c == U'-' && !cur.empty() && keep(cur.back()) && i + 1 < text.size() && keep(text[i + 1])) {
      cur.push_back(c);
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::vector<U32> split_on(const U32& s, char32_t sep) {
  std::vector<U32> parts;
  U32 cur;
  for (char32_t c : s) {
    if (c == sep) {
      if (!cur.empty()) parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) parts.push_back(std::move(cur));
  return parts;
}

std::vector<U32> split_whitespace(const U32& s) {
  std::vector<U32> parts;
  U32 cur;
  for (char32_t c : s) {
    if (u_isUWhiteSpace(static_cast<UChar32>(c))) {
      if (!cur.empty()) parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) parts.push_back(std::move(cur));
  return parts;
}

// Stage 4 plus hyphen splitting. Collocations are matched greedily, longest
// first, left to right.
std::vector<std::string> join_collocations(const std::vector<U32>& words,
                                           const std::vector<std::vector<U32>>& collocations,
                                           char32_t join_char) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < words.size()) {
    const std::vector<U32>* match = nullptr;
    for (const auto& c : collocations) {
      if (c.size() > words.size() - i) continue;
      if (std::equal(c.begin(), c.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) {
        match = &c;
        break;
      }
    }
    if (match) {
      U32 joined;
      for (std::size_t j = 0; j < match->size(); ++j) {
        if (j) joined.push_back(join_char);
        joined += (*match)[j];
      }
      std::replace(joined.begin(), joined.end(), U'-', join_char);
      out.push_back(to_utf8(joined));
      i += match->size();
    } else {
      for (const U32& part : split_on(words[i], U'-')) out.push_back(to_utf8(part));
      ++i;
    }
  }
  return out;
}

bool has_upper(const std::string& s) {
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(s);
  icu::UnicodeString lower = u;
  lower.toLower(icu::Locale::getRoot());
  return lower != u;
}

std::vector<std::string> json_strings(const nlohmann::json& j, const char* key) {
  std::vector<std::string> out;
  if (!j.contains(key)) return out;
  if (!j.at(key).is_array()) fail("InvalidConfig", std::string(key) + " must be a list");
  for (const auto& v : j.at(key)) out.push_back(v.get<std::string>());
  return out;
}

}  // namespace

// ---- config ------------------------------------------------------------------

void PreprocessConfig::validate() const {
  if (min_token_len < 1) fail("InvalidConfig", "min_token_len must be >= 1");
  for (const auto& c : collocations)
    if (split_whitespace(decode(c)).size() < 2)
      fail("InvalidConfig", "collocation needs at least two words: '" + c + "'");
  auto check_lower = [](const std::string& what, const std::string& s) {
    if (has_upper(s)) fail("InvalidConfig", what + " entry is not lowercase: '" + s + "'");
  };
  for (const auto& s : structural_phrases) check_lower("structural_phrases", s);
  for (const auto& s : removal_terms) check_lower("removal_terms", s);
  for (const auto& s : collocations) check_lower("collocations", s);
  for (const auto& s : stopwords) check_lower("stopwords", s);
  for (const auto& [k, v] : lemma_dictionary) {
    check_lower("lemma_dictionary", k);
    check_lower("lemma_dictionary", v);
  }
}

std::unordered_set<std::string> read_word_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("IoError", "cannot open word list " + path.string());
  std::unordered_set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    words.insert(line);
  }
  return words;
}

std::unordered_map<std::string, std::string> read_lemma_dictionary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("IoError", "cannot open lemma dictionary " + path.string());
  std::unordered_map<std::string, std::string> dict;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size())
      fail("InvalidConfig", path.string() + ":" + std::to_string(lineno) + ": expected surface<TAB>lemma");
    dict.emplace(line.substr(0, tab), line.substr(tab + 1));
  }
  return dict;
}

PreprocessConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) fail("InvalidConfig", "config must be an object");
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  PreprocessConfig cfg;
  cfg.structural_phrases = json_strings(j, "structural_phrases");
  cfg.removal_terms = json_strings(j, "removal_terms");
  cfg.collocations = json_strings(j, "collocations");
  if (j.contains("stopwords")) {
    const auto& sw = j.at("stopwords");
    if (sw.contains("base")) cfg.stopwords = read_word_list(resolve(sw.at("base").get<std::string>()));
    for (const auto& w : json_strings(sw, "add")) cfg.stopwords.insert(w);
  }
  if (j.contains("lemma_dictionary"))
    cfg.lemma_dictionary = read_lemma_dictionary(resolve(j.at("lemma_dictionary").get<std::string>()));
  if (j.contains("min_token_len")) {
    const auto n = j.at("min_token_len").get<long long>();
    if (n < 1) fail("InvalidConfig", "min_token_len must be >= 1");
    cfg.min_token_len = static_cast<std::size_t>(n);
  }
  if (j.contains("join_char")) {
    const U32 jc = decode(j.at("join_char").get<std::string>());
    if (jc.size() != 1) fail("InvalidConfig", "join_char must be a single character");
    cfg.join_char = jc.front();
  }
  cfg.validate();
  return cfg;
}

PreprocessConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("IoError", "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail("InvalidConfig", path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

nlohmann::json resolved_config(const PreprocessConfig& cfg) {
  std::vector<std::string> stop(cfg.stopwords.begin(), cfg.stopwords.end());
  std::sort(stop.begin(), stop.end());
  std::vector<std::pair<std::string, std::string>> lemmas(cfg.lemma_dictionary.begin(),
                                                          cfg.lemma_dictionary.end());
  std::sort(lemmas.begin(), lemmas.end());
  std::string lemma_blob;
  for (const auto& [k, v] : lemmas) lemma_blob += k + '\t' + v + '\n';
  return {
      {"structural_phrases", cfg.structural_phrases},
      {"removal_terms", cfg.removal_terms},
      {"collocations", cfg.collocations},
      {"stopwords", stop},
      {"lemma_dictionary_sha256", sha256_hex(lemma_blob)},
      {"lemma_dictionary_entries", lemmas.size()},
      {"min_token_len", cfg.min_token_len},
      {"join_char", to_utf8(U32(1, cfg.join_char))},
  };
}

// ---- preprocessing -------------------------------------------------------------

std::string normalized_text(const std::string& text) {
  icu::UnicodeString s = icu::UnicodeString::fromUTF8(text);
  s.toLower(icu::Locale::getRoot());
  U32 out;
  bool pending_space = false;
  for (char32_t c : code_points(s)) {
    if (u_isUWhiteSpace(static_cast<UChar32>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(U' ');
    pending_space = false;
    out.push_back(c);
  }
  return to_utf8(out);
}

std::vector<RawDocument> dedupe(std::span<const RawDocument> docs) {
  std::unordered_set<std::string> seen;
  std::vector<RawDocument> out;
  for (const auto& d : docs)
    if (seen.insert(sha256_hex(normalized_text(d.text))).second) out.push_back(d);
  return out;
}

ProcessedDocument preprocess(const RawDocument& doc, const PreprocessConfig& config) {
  U32 text = normalize_lower(doc.text);

  std::vector<U32> phrases;
  for (const auto& p : config.structural_phrases) phrases.push_back(decode(p));
  delete_phrases(text, phrases);

  const std::vector<U32> words = split_words(text, config.join_char);

  std::vector<std::vector<U32>> collocations;
  for (const auto& c : config.collocations) collocations.push_back(split_whitespace(decode(c)));
  std::stable_sort(collocations.begin(), collocations.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
  std::vector<std::string> tokens = join_collocations(words, collocations, config.join_char);

  const std::unordered_set<std::string> removal(config.removal_terms.begin(), config.removal_terms.end());
  ProcessedDocument out{doc.id, {}};
  for (auto& t : tokens) {
    if (removal.count(t) || config.stopwords.count(t)) continue;
    if (auto it = config.lemma_dictionary.find(t); it != config.lemma_dictionary.end()) t = it->second;
    if (length_cp(t) < config.min_token_len) continue;
    out.tokens.push_back(std::move(t));
  }
  return out;
}

// ---- vocabulary / DTM ------------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> terms) : terms_(std::move(terms)) {
  std::sort(terms_.begin(), terms_.end());
  terms_.erase(std::unique(terms_.begin(), terms_.end()), terms_.end());
  index_.reserve(terms_.size());
  for (std::size_t i = 0; i < terms_.size(); ++i) index_.emplace(terms_[i], i);
}

std::optional<std::size_t> Vocabulary::find(const std::string& term) const {
  auto it = index_.find(term);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

DocTermMatrix::DocTermMatrix(std::vector<std::string> doc_ids, Vocabulary vocab,
                             std::vector<std::vector<Entry>> rows)
    : doc_ids_(std::move(doc_ids)), vocab_(std::move(vocab)) {
  if (rows.size() != doc_ids_.size()) fail("InvalidDtm", "row count does not match document ids");
  offsets_.reserve(rows.size() + 1);
  doc_lengths_.reserve(rows.size());
  for (auto& r : rows) {
    std::sort(r.begin(), r.end(), [](const Entry& a, const Entry& b) { return a.term < b.term; });
    std::uint64_t len = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (r[i].term >= vocab_.size()) fail("InvalidDtm", "term index out of range");
      if (i && r[i].term == r[i - 1].term) fail("InvalidDtm", "duplicate entry in row");
      if (r[i].count == 0) continue;
      entries_.push_back(r[i]);
      len += r[i].count;
    }
    offsets_.push_back(entries_.size());
    doc_lengths_.push_back(len);
    total_tokens_ += len;
  }
}

std::uint32_t DocTermMatrix::count(std::size_t d, std::size_t v) const {
  auto r = row(d);
  auto it = std::lower_bound(r.begin(), r.end(), v, [](const Entry& e, std::size_t t) { return e.term < t; });
  return it != r.end() && it->term == v ? it->count : 0;
}

std::vector<std::uint32_t> DocTermMatrix::document_frequencies() const {
  std::vector<std::uint32_t> df(num_terms(), 0);
  for (const Entry& e : entries_) ++df[e.term];
  return df;
}

DocTermMatrix DocTermMatrix::select_rows(std::span<const std::size_t> docs) const {
  std::vector<std::string> ids;
  std::vector<std::vector<Entry>> rows;
  for (std::size_t d : docs) {
    ids.push_back(doc_ids_.at(d));
    auto r = row(d);
    rows.emplace_back(r.begin(), r.end());
  }
  return DocTermMatrix(std::move(ids), vocab_, std::move(rows));
}

void DocTermMatrix::check_invariants() const {
  if (num_docs() == 0) fail("EmptyCorpus", "matrix has no documents");
  for (std::size_t d = 0; d < num_docs(); ++d)
    if (doc_lengths_[d] == 0) fail("InvalidDtm", "document '" + doc_ids_[d] + "' is empty");
  const auto df = document_frequencies();
  for (std::size_t v = 0; v < df.size(); ++v)
    if (df[v] == 0) fail("InvalidDtm", "term '" + vocab_.term(v) + "' occurs in no document");
}

BuildResult build_dtm(std::span<const ProcessedDocument> docs) {
  BuildResult result;
  std::vector<const ProcessedDocument*> kept;
  std::vector<std::string> all_terms;
  for (const auto& d : docs) {
    if (d.tokens.empty()) {
      result.dropped.push_back(d.id);
      continue;
    }
    kept.push_back(&d);
    all_terms.insert(all_terms.end(), d.tokens.begin(), d.tokens.end());
  }
  if (kept.empty()) fail("EmptyCorpus", "no document has tokens after preprocessing");

  Vocabulary vocab(std::move(all_terms));
  std::vector<std::string> ids;
  std::vector<std::vector<Entry>> rows;
  for (const auto* d : kept) {
    std::vector<std::uint32_t> idx;
    idx.reserve(d->tokens.size());
    for (const auto& t : d->tokens) idx.push_back(static_cast<std::uint32_t>(*vocab.find(t)));
    std::sort(idx.begin(), idx.end());
    std::vector<Entry> row;
    for (std::uint32_t v : idx) {
      if (!row.empty() && row.back().term == v)
        ++row.back().count;
      else
        row.push_back({v, 1});
    }
    ids.push_back(d->id);
    rows.push_back(std::move(row));
  }
  result.dtm = DocTermMatrix(std::move(ids), std::move(vocab), std::move(rows));
  return result;
}

CorpusStats corpus_stats(const DocTermMatrix& dtm) {
  CorpusStats s;
  s.documents = dtm.num_docs();
  s.terms = dtm.num_terms();
  s.tokens = dtm.total_tokens();
  if (s.documents == 0) return s;
  std::vector<std::uint64_t> lengths(s.documents);
  for (std::size_t d = 0; d < s.documents; ++d) lengths[d] = dtm.doc_length(d);
  std::sort(lengths.begin(), lengths.end());
  s.min_doc_length = lengths.front();
  s.max_doc_length = lengths.back();
  s.mean_doc_length = static_cast<double>(s.tokens) / static_cast<double>(s.documents);
  const std::size_t mid = s.documents / 2;
  s.median_doc_length = s.documents % 2 ? static_cast<double>(lengths[mid])
                                        : 0.5 * static_cast<double>(lengths[mid - 1] + lengths[mid]);
  return s;
}

nlohmann::json stats_to_json(const CorpusStats& s) {
  return {{"documents", s.documents},
          {"terms", s.terms},
          {"tokens", s.tokens},
          {"doc_length", {{"min", s.min_doc_length},
                          {"max", s.max_doc_length},
                          {"mean", s.mean_doc_length},
                          {"median", s.median_doc_length}}}};
}

// ---- corpus input --------------------------------------------------------------

std::vector<RawDocument> parse_corpus(std::istream& in) {
  std::vector<RawDocument> docs;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    RawDocument doc;
    try {
      const auto j = nlohmann::json::parse(line);
      doc.id = j.at("id").get<std::string>();
      doc.text = j.value("text", std::string{});
      if (j.contains("meta"))
        for (const auto& [k, v] : j.at("meta").items())
          doc.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
    } catch (const nlohmann::json::exception& e) {
      fail("CorruptInput", "corpus line " + std::to_string(lineno) + ": " + e.what());
    }
    if (doc.id.empty()) fail("CorruptInput", "corpus line " + std::to_string(lineno) + ": empty id");
    if (!ids.insert(doc.id).second) fail("DuplicateId", "duplicate document id '" + doc.id + "'");
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<RawDocument> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("IoError", "cannot open corpus " + path.string());
  return parse_corpus(in);
}

// ---- DTM container -------------------------------------------------------------

namespace {
constexpr std::string_view kDtmMagic{"TFDTM\0\0\0", 8};
constexpr std::uint32_t kDtmVersion = 1;
}  // namespace

void write_dtm(const DocTermMatrix& dtm, std::ostream& out) {
  out.write(kDtmMagic.data(), kDtmMagic.size());
  binio::put_u32(out, kDtmVersion);
  binio::put_u64(out, dtm.num_docs());
  binio::put_u64(out, dtm.num_terms());
  binio::put_u64(out, dtm.total_tokens());
  for (const auto& t : dtm.vocab().terms()) binio::put_str(out, t);
  for (const auto& id : dtm.doc_ids()) binio::put_str(out, id);
  binio::put_u64(out, dtm.nnz());
  for (std::size_t d = 0; d < dtm.num_docs(); ++d)
    for (const Entry& e : dtm.row(d)) {
      binio::put_u32(out, static_cast<std::uint32_t>(d));
      binio::put_u32(out, e.term);
      binio::put_u32(out, e.count);
    }
}

void write_dtm(const DocTermMatrix& dtm, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("IoError", "cannot write " + path.string());
  write_dtm(dtm, out);
  if (!out) fail("IoError", "write failed for " + path.string());
}

DocTermMatrix read_dtm(std::istream& in) {
  binio::Reader r(in, "dtm");
  r.expect_magic(kDtmMagic);
  if (r.u32() != kDtmVersion) r.fail("unsupported version");
  const std::uint64_t D = r.u64();
  const std::uint64_t V = r.u64();
  const std::uint64_t total = r.u64();
  if (D > (1u << 31) || V > (1u << 31)) r.fail("dimensions out of range");
  std::vector<std::string> terms(V), ids(D);
  for (auto& t : terms) t = r.str();
  for (auto& id : ids) id = r.str();
  if (!std::is_sorted(terms.begin(), terms.end()) ||
      std::adjacent_find(terms.begin(), terms.end()) != terms.end())
    r.fail("vocabulary not strictly sorted");
  const std::uint64_t nnz = r.u64();
  std::vector<std::vector<Entry>> rows(D);
  std::uint64_t prev_doc = 0, prev_term = 0, seen = 0;
  for (std::uint64_t i = 0; i < nnz; ++i) {
    const std::uint32_t d = r.u32(), v = r.u32(), c = r.u32();
    if (d >= D || v >= V || c == 0) r.fail("triplet out of range");
    if (i && (d < prev_doc || (d == prev_doc && v <= prev_term))) r.fail("triplets not in row-major order");
    prev_doc = d;
    prev_term = v;
    seen += c;
    rows[d].push_back({v, c});
  }
  if (seen != total) r.fail("token total mismatch");
  return DocTermMatrix(std::move(ids), Vocabulary(std::move(terms)), std::move(rows));
}

DocTermMatrix read_dtm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("IoError", "cannot open " + path.string());
  return read_dtm(in);
}

void export_dtm_text(const DocTermMatrix& dtm, std::ostream& out) {
  out << "# topicflow dtm v" << kDtmVersion << "\n";
  out << "# documents " << dtm.num_docs() << "\n";
  out << "# terms " << dtm.num_terms() << "\n";
  out << "# tokens " << dtm.total_tokens() << "\n";
  for (std::size_t d = 0; d < dtm.num_docs(); ++d)
    for (const Entry& e : dtm.row(d))
      out << dtm.doc_ids()[d] << '\t' << dtm.vocab().term(e.term) << '\t' << e.count << '\n';
}

}  // namespace topicflow::corpus
