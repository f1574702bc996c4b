#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "grade/corpus.hpp"
#include "grade/gateway.hpp"
#include "grade/util.hpp"

namespace grade {

namespace {

std::string between(std::string_view text, std::string_view open, std::string_view close) {
    auto b = text.find(open);
    if (b == std::string_view::npos) return {};
    b += open.size();
    auto e = close.empty() ? std::string_view::npos : text.find(close, b);
    return std::string(text.substr(b, e == std::string_view::npos ? std::string_view::npos : e - b));
}

std::string strip_edges(std::string_view s) {
    std::string out = trim(s);
    auto is_edge = [](char c) {
        return std::isspace(static_cast<unsigned char>(c)) || c == '.' || c == ',' || c == ';' || c == ':' ||
               c == '!' || c == '?' || c == '"' || c == '\'';
    };
    while (!out.empty() && is_edge(out.back())) out.pop_back();
    std::size_t b = 0;
    while (b < out.size() && is_edge(out[b])) ++b;
    return out.substr(b);
}

std::size_t word_count(std::string_view s) { return split_whitespace(s).size(); }

std::set<std::string> content_words(std::string_view s) {
    std::set<std::string> out;
    for (auto& w : word_tokens(s))
        if (!is_stopword(w)) out.insert(std::move(w));
    return out;
}

// Lower-cased, punctuation-free, leading article dropped.
std::string entity_norm(std::string_view s) {
    auto f = fold_punctuation(s);
    if (f.rfind("the ", 0) == 0) f = f.substr(4);
    return f;
}

bool entity_match(std::string_view a, std::string_view b) {
    if (canonical_key(a) == canonical_key(b) || entity_norm(a) == entity_norm(b)) return true;
    auto ca = content_words(a);
    auto cb = content_words(b);
    if (ca.empty() || cb.empty()) return false;
    return std::includes(ca.begin(), ca.end(), cb.begin(), cb.end()) ||
           std::includes(cb.begin(), cb.end(), ca.begin(), ca.end());
}

bool is_acronym_of(std::string_view shorter, std::string_view longer) {
    auto s = entity_norm(shorter);
    if (s.size() < 2 || s.find(' ') != std::string::npos) return false;
    std::string initials;
    for (const auto& w : word_tokens(longer))
        if (!is_stopword(w)) initials.push_back(w[0]);
    return initials.size() >= 2 && initials == s;
}

// "(a, r, b)" -> triple; entities may not contain ", ".
std::optional<mock::SimpleTriple> parse_paren_triple(std::string_view item) {
    auto s = trim(item);
    if (s.size() < 2 || s.front() != '(' || s.back() != ')') return std::nullopt;
    s = s.substr(1, s.size() - 2);
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (true) {
        auto c = s.find(", ", pos);
        parts.push_back(s.substr(pos, c == std::string::npos ? std::string::npos : c - pos));
        if (c == std::string::npos) break;
        pos = c + 2;
    }
    if (parts.size() < 3) return std::nullopt;
    std::vector<std::string> middle(parts.begin() + 1, parts.end() - 1);
    return mock::SimpleTriple{trim(parts.front()), trim(join(middle, ", ")), trim(parts.back())};
}

const std::vector<std::string> kOpinionMarkers = {
    "i think",    "i believe", "in my opinion", "i feel",   "we believe", "should",    "must",
    "best",       "worst",     "terrible",      "amazing",  "awful",      "brilliant", "wonderful",
    "disappoint", "poorly",    "probably",      "arguably", "seems",      "hopefully", "unfortunately",
    "love",       "hate",      "deserve",       "overrated", "shameful",  "fantastic", "sadly",
    "perhaps",    "might be",  "it is clear that", "surely", "frankly",  "beautiful", "boring",
    "ought",      "needs to",  "too much",      "horrible", "incredible", "great",
};

const std::vector<std::string> kPronouns = {"he", "she", "they", "it", "him", "her", "them", "this", "that"};

const std::vector<std::string> kVagueAnswers = {"other countries", "certain individuals", "this technology",
                                                "some people", "others", "various factors"};

}  // namespace

std::string mock_prompt_key(const RenderedPrompt& prompt) { return sha256_hex(prompt.system + "\n" + prompt.user); }

std::map<std::string, std::string> load_mock_script(const std::filesystem::path& path) {
    return json::parse(read_file(path)).get<std::map<std::string, std::string>>();
}

// ── Embeddings ──────────────────────────────────────────────

std::vector<Embedding> MockEmbeddingBackend::embed(const std::vector<std::string>& texts, const std::string&) {
    static std::mutex memo_mutex;
    static std::map<std::pair<std::uint64_t, std::string>, std::vector<double>> memo;

    auto token_vector = [&](const std::string& token) {
        const std::pair<std::uint64_t, std::string> key{seed_ ^ dimension_, token};
        {
            std::lock_guard lock(memo_mutex);
            if (auto it = memo.find(key); it != memo.end()) return it->second;
        }
        std::mt19937_64 gen(hash_seed(std::to_string(seed_) + "\x1f" + token));
        std::vector<double> v(dimension_);
        double sq = 0.0;
        for (auto& x : v) {
            x = 2.0 * static_cast<double>(gen() >> 11) * 0x1.0p-53 - 1.0;
            sq += x * x;
        }
        for (auto& x : v) x /= std::sqrt(sq);
        std::lock_guard lock(memo_mutex);
        memo.emplace(key, v);
        return v;
    };

    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        auto tokens = word_tokens(text);
        if (tokens.empty()) tokens.push_back(text);
        std::vector<double> acc(dimension_, 0.0);
        for (const auto& t : tokens) {
            auto v = token_vector(t);
            for (std::size_t d = 0; d < dimension_; ++d) acc[d] += v[d];
        }
        const double norm = std::sqrt(std::inner_product(acc.begin(), acc.end(), acc.begin(), 0.0));
        Embedding e(dimension_);
        for (std::size_t d = 0; d < dimension_; ++d) e[d] = static_cast<float>(acc[d] / norm);
        out.push_back(std::move(e));
    }
    return out;
}

// ── Rules ───────────────────────────────────────────────────

namespace mock {

const std::vector<std::string>& relation_lexicon() {
    static const std::vector<std::string> kLexicon = [] {
        std::vector<std::string> words = {
            "signed with",       "plays for",        "played for",       "is coached by",   "coached",
            "is based in",       "is located in",    "defeated",         "beat",            "won",
            "hosted",            "owns",             "acquired",         "was diagnosed with", "led to",
            "causes",            "caused",           "treats",           "is treated with", "had",
            "joined",            "manages",          "sponsors",         "partnered with",  "developed",
            "approved",          "funded",           "reduced",          "increased",       "published",
            "discovered",        "leads",            "founded",          "is part of",      "belongs to",
            "was born in",       "moved to",         "appointed",        "will face",       "faced",
            "transferred to",    "produces",         "manufactures",     "contains",        "prevents",
            "targets",           "indicates",        "will persist",     "studied",         "trains at",
            "plays home games at", "is headquartered in", "is made by",  "competes in",     "was founded by",
            "is sponsored by",   "recommended",      "is caused by",     "is linked to",    "regulates",
            "inspected",         "supplies",         "raises the risk of", "is an ingredient in", "scored for",
        };
        std::stable_sort(words.begin(), words.end(),
                         [](const auto& a, const auto& b) { return a.size() > b.size(); });
        return words;
    }();
    return kLexicon;
}

std::optional<SimpleTriple> extract_relation(std::string_view sentence) {
    const std::string padded = " " + to_lower(collapse_whitespace(sentence)) + " ";
    const std::string original = " " + collapse_whitespace(sentence) + " ";
    std::size_t best_pos = std::string::npos;
    std::string best_rel;
    for (const auto& rel : relation_lexicon()) {
        auto pos = padded.find(" " + rel + " ");
        if (pos != std::string::npos && pos < best_pos) {
            best_pos = pos;
            best_rel = rel;
        }
    }
    if (best_pos == std::string::npos) return std::nullopt;

    std::string subject = original.substr(0, best_pos);
    std::string object = original.substr(best_pos + best_rel.size() + 1);
    if (auto c = subject.rfind(", "); c != std::string::npos) subject = subject.substr(c + 2);
    if (auto c = object.find(", "); c != std::string::npos) object = object.substr(0, c);
    if (auto c = object.find("; "); c != std::string::npos) object = object.substr(0, c);
    subject = to_lower(strip_edges(subject));
    object = to_lower(strip_edges(object));

    const auto sw = word_count(subject);
    const auto ow = word_count(object);
    if (sw == 0 || ow == 0 || sw > 8 || ow > 8) return std::nullopt;
    if (std::find(kPronouns.begin(), kPronouns.end(), subject) != kPronouns.end()) return std::nullopt;
    if (subject.find('|') != std::string::npos || object.find('|') != std::string::npos) return std::nullopt;
    return SimpleTriple{subject, best_rel, object};
}

std::string resolve_pronouns(std::string_view evidence, std::string_view context) {
    std::string ev = trim(evidence);
    if (word_tokens(ev).empty()) return {};
    auto words = split_whitespace(ev);
    const auto first = to_lower(strip_edges(words.front()));
    if (first != "he" && first != "she" && first != "they" && first != "it") return ev;

    // Most frequent run of two or more capitalized words in the context.
    std::map<std::string, int> counts;
    std::vector<std::string> order;
    std::vector<std::string> run;
    auto flush = [&] {
        if (run.size() >= 2) {
            auto name = join(run, " ");
            if (counts[name]++ == 0) order.push_back(name);
        }
        run.clear();
    };
    for (const auto& raw : split_whitespace(context)) {
        auto w = strip_edges(raw);
        bool cap = !w.empty() && std::isupper(static_cast<unsigned char>(w[0]));
        if (cap) run.push_back(w);
        if (!cap || w.size() != trim(raw).size()) flush();
    }
    flush();
    if (order.empty()) return ev;
    std::string best = order.front();
    for (const auto& name : order)
        if (counts[name] > counts[best]) best = name;
    words.front() = best;
    return join(words, " ");
}

bool claim_supported(std::string_view sentence, std::string_view claim) {
    auto sent = word_tokens(sentence);
    std::set<std::string> have(sent.begin(), sent.end());
    for (const auto& w : content_words(claim))
        if (!have.contains(w)) return false;
    return true;
}

bool looks_like_opinion(std::string_view sentence) {
    const auto s = trim(sentence);
    if (!s.empty() && (s.back() == '?' || s.back() == '!')) return true;
    const std::string padded = " " + fold_punctuation(s) + " ";
    for (const auto& marker : kOpinionMarkers) {
        if (padded.find(" " + marker) != std::string::npos) return true;
    }
    return false;
}

bool is_vague_pair(std::string_view question, std::string_view answer) {
    const std::string a = " " + fold_punctuation(answer) + " ";
    for (const auto& v : kVagueAnswers)
        if (a.find(" " + v + " ") != std::string::npos) return true;
    for (const auto& w : word_tokens(question))
        if (std::find(kPronouns.begin(), kPronouns.end(), w) != kPronouns.end()) return true;
    return trim(answer).empty();
}

std::string equivalence_lines(const std::vector<std::string>& input) {
    std::vector<std::string> entities = input;
    std::sort(entities.begin(), entities.end());
    entities.erase(std::unique(entities.begin(), entities.end()), entities.end());
    const std::size_t n = entities.size();

    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    std::vector<std::string> context_lines;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto& a = entities[i];
            const auto& b = entities[j];
            if (canonical_key(a) == canonical_key(b)) continue;
            const bool exact = entity_norm(a) == entity_norm(b) || is_acronym_of(a, b) || is_acronym_of(b, a);
            if (exact) {
                parent[find(i)] = find(j);
                continue;
            }
            auto ca = content_words(a);
            auto cb = content_words(b);
            const bool a_in_b = ca.size() >= 2 && ca.size() < cb.size() &&
                                std::includes(cb.begin(), cb.end(), ca.begin(), ca.end());
            const bool b_in_a = cb.size() >= 2 && cb.size() < ca.size() &&
                                std::includes(ca.begin(), ca.end(), cb.begin(), cb.end());
            if (a_in_b || b_in_a) context_lines.push_back("[" + a + "|" + b + "] \"context\"");
        }
    }
    std::map<std::size_t, std::vector<std::string>> groups;
    for (std::size_t i = 0; i < n; ++i) groups[find(i)].push_back(entities[i]);
    std::vector<std::string> lines;
    for (auto& [root, members] : groups)
        if (members.size() >= 2) lines.push_back("[" + join(members, "|") + "] \"always\"");
    std::sort(lines.begin(), lines.end());
    std::sort(context_lines.begin(), context_lines.end());
    lines.insert(lines.end(), context_lines.begin(), context_lines.end());
    if (lines.empty()) return "No identical entities found.";
    return join(lines, "\n");
}

std::string chain_question(const std::vector<SimpleTriple>& path) {
    if (path.empty()) return {};
    std::string q = "Starting from " + path.front().subject + ", which entity is reached by following";
    for (std::size_t i = 0; i < path.size(); ++i) {
        q += i == 0 ? " \"" : " then \"";
        q += path[i].relation + "\"";
    }
    return q + "?";
}

std::string answer_chain_question(std::string_view question, std::string_view context) {
    static constexpr std::string_view kStart = "Starting from ";
    static constexpr std::string_view kMid = ", which entity is reached by following ";
    const std::string q = trim(question);
    if (q.rfind(kStart, 0) != 0) return "UNKNOWN";
    auto mid = q.find(kMid);
    if (mid == std::string::npos) return "UNKNOWN";
    std::string start = q.substr(kStart.size(), mid - kStart.size());
    std::vector<std::string> relations;
    for (std::size_t pos = mid + kMid.size(); pos < q.size();) {
        auto open = q.find('"', pos);
        if (open == std::string::npos) break;
        auto close = q.find('"', open + 1);
        if (close == std::string::npos) break;
        relations.push_back(q.substr(open + 1, close - open - 1));
        pos = close + 1;
    }
    if (relations.empty()) return "UNKNOWN";

    std::vector<SimpleTriple> facts;
    for (const auto& line : split_lines(context)) {
        for (const auto& sentence : split_text_sentences(line))
            if (auto t = extract_relation(sentence)) facts.push_back(*t);
    }

    std::set<std::string> frontier{to_lower(start)};
    for (const auto& rel : relations) {
        std::set<std::string> next;
        for (const auto& f : facts) {
            if (f.relation != rel) continue;
            for (const auto& cur : frontier) {
                if (entity_match(cur, f.subject)) {
                    next.insert(f.object);
                    break;
                }
            }
        }
        if (next.empty()) return "UNKNOWN";
        frontier = std::move(next);
    }
    return *frontier.begin();
}

bool judge_fold_match(std::string_view gold, std::string_view response) {
    const auto g = fold_punctuation(gold);
    if (g.empty()) return false;
    return (" " + fold_punctuation(response) + " ").find(" " + g + " ") != std::string::npos;
}

}  // namespace mock

ChatResult MockChatBackend::chat(TemplateName name, const RenderedPrompt& prompt, const ModelParams&) {
    const std::string& user = prompt.user;
    std::string text;
    if (auto it = script_.find(mock_prompt_key(prompt)); it != script_.end()) {
        text = it->second;
    } else {
        switch (name) {
            case TemplateName::claim_generation:
                text = mock::resolve_pronouns(between(user, "Evidence: ", "\n\nClaim:"),
                                              between(user, "Context: ", "\n\nEvidence: "));
                break;
            case TemplateName::consistency_check:
                text = mock::claim_supported(between(user, "Sentence: ", "\n\nClaim: "), between(user, "\n\nClaim: ", ""))
                           ? "Yes"
                           : "No";
                break;
            case TemplateName::triple_extraction: {
                std::vector<std::string> lines;
                for (const auto& line : split_lines(user)) {
                    if (line.rfind("Sentence ", 0) != 0) continue;
                    auto colon = line.find(": ");
                    if (colon == std::string::npos) continue;
                    const auto index = line.substr(9, colon - 9);
                    if (auto t = mock::extract_relation(line.substr(colon + 2)))
                        lines.push_back("(" + t->subject + "|" + t->relation + "|" + t->object + "|" + index + ")");
                }
                text = join(lines, "\n");
                break;
            }
            case TemplateName::equivalence_search: {
                std::vector<std::string> entities;
                for (const auto& line : split_lines(user)) {
                    if (line.rfind("Triple: ", 0) != 0) continue;
                    if (auto t = parse_paren_triple(line.substr(8))) {
                        entities.push_back(t->subject);
                        entities.push_back(t->object);
                    }
                }
                text = mock::equivalence_lines(entities);
                break;
            }
            case TemplateName::qa_generation: {
                const auto triples_line = between(user, "\nTriples: ", "\nClaims: ");
                std::vector<mock::SimpleTriple> path;
                std::size_t pos = 0;
                while (pos < triples_line.size()) {
                    auto sep = triples_line.find("); (", pos);
                    auto end = sep == std::string::npos ? triples_line.size() : sep + 1;
                    if (auto t = parse_paren_triple(triples_line.substr(pos, end - pos))) path.push_back(*t);
                    pos = sep == std::string::npos ? triples_line.size() : sep + 3;
                }
                text = path.empty() ? "I cannot form a question."
                                    : "Question: " + mock::chain_question(path) + " | Answer: " + path.back().object;
                break;
            }
            case TemplateName::qa_validation:
                text = mock::is_vague_pair(between(user, "Question: ", "\nAnswer: "), between(user, "\nAnswer: ", ""))
                           ? "False"
                           : "True";
                break;
            case TemplateName::rag_answer:
                text = mock::answer_chain_question(between(user, "Question: ", "\nContext: "),
                                                   between(user, "\nContext: ", ""));
                break;
            case TemplateName::judge:
                text = mock::judge_fold_match(between(user, "\nGround Truth Answer: ", "\nResponse: "),
                                              between(user, "\nResponse: ", ""))
                           ? "True"
                           : "False";
                break;
            case TemplateName::fact_classification:
                text = mock::looks_like_opinion(between(user, "Sentence: ", "")) ? "Opinion" : "Fact";
                break;
        }
    }
    return {text,
            {static_cast<std::int64_t>(word_count(prompt.system) + word_count(prompt.user)),
             static_cast<std::int64_t>(word_count(text))}};
}

}  // namespace grade
