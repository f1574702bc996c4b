#include <algorithm>
#include <array>
#include <cctype>

#include "grade/gateway.hpp"

namespace grade {

namespace {

constexpr std::array<std::pair<TemplateName, std::string_view>, 9> kNames{{
    {TemplateName::claim_generation, "claim_generation"},
    {TemplateName::consistency_check, "consistency_check"},
    {TemplateName::triple_extraction, "triple_extraction"},
    {TemplateName::equivalence_search, "equivalence_search"},
    {TemplateName::qa_generation, "qa_generation"},
    {TemplateName::qa_validation, "qa_validation"},
    {TemplateName::rag_answer, "rag_answer"},
    {TemplateName::judge, "judge"},
    {TemplateName::fact_classification, "fact_classification"},
}};

const PromptTemplate kClaimGeneration{
    TemplateName::claim_generation,
    "A **claim** is a statement or assertion made within a text that expresses a belief, opinion, or fact. "
    "Given the evidence and the original context, please transform the evidence into a claim.\n"
    "\n"
    "Note:\n"
    "\n"
    "- The claim should be a clear and concise statement that logically follows from the provided evidence.\n"
    "\n"
    "- The claim should not contain ambiguous references such as \"he,\" \"she,\" or \"it.\" Use complete "
    "names or specify entities where necessary.\n"
    "\n"
    "- The claim must be a paraphrased version of the evidence, stating the point or fact clearly, without "
    "adding extra information.\n"
    "\n"
    "- If there is no claim that can be drawn from the evidence, please leave the response blank.",
    "Context: {context}\n"
    "\n"
    "Evidence: {evidence}\n"
    "\n"
    "Claim:",
};

const PromptTemplate kConsistencyCheck{
    TemplateName::consistency_check,
    "You are an AI assistant that receives pairs of sentences and claims.\n"
    "Your task is to determine whether each claim is consistent with its corresponding sentence.\n"
    "Focus solely on whether the claim accurately reflects the core factual content of the sentence.\n"
    "Ignore style, tone, attitude, or figurative language.\n"
    "Respond with \"Yes\" if the claim is factually consistent with the sentence.\n"
    "Respond with \"No\" if the claim introduces information that is not supported or is inconsistent.\n"
    "Output format: Yes / No",
    "Sentence: {sentence}\n"
    "\n"
    "Claim: {claim}",
};

const PromptTemplate kTripleExtraction{
    TemplateName::triple_extraction,
    "You are an AI assistant that extracts entities and their relationships from a list of sentences. "
    "Each sentence has an associated sentence ID.\n"
    "\n"
    "Your task is to extract triplets from each sentence in the form of: "
    "(source_entity|relationship|target_entity|sentence_id)\n"
    "\n"
    "Please follow these guidelines:\n"
    "- An entity can be a person, place, object, concept, or any meaningful noun phrase that participates "
    "in a relationship.\n"
    "- Extract all valid (source_entity|relationship|target_entity) triplets from each sentence.\n"
    "- Append the sentence ID at the end of each triplet to indicate which sentence it came from.\n"
    "- If multiple triplets can be extracted from a single sentence, list all of them.\n"
    "- Do not include duplicate triplets where only the order of source and target is reversed.\n"
    "\n"
    "IMPORTANT: Resolve pronouns\n"
    "- Replace pronouns such as he, she, it, they, this, that with the most specific entity mentioned in "
    "the sentence.\n"
    "\n"
    "Output format:\n"
    "(source_entity|relationship|target_entity|1)\n"
    "(source_entity|relationship|target_entity|2)\n"
    "(source_entity|relationship|target_entity|2)\n"
    "(source_entity|relationship|target_entity|3)",
    "{sentences}",
};

const PromptTemplate kEquivalenceSearch{
    TemplateName::equivalence_search,
    "You are an AI assistant tasked with identifying entities that refer to the same concept based on a "
    "given set of triples and their supporting claims.\n"
    "\n"
    "Each input consists of multiple (source_entity, relationship, target_entity) triples along with their "
    "corresponding claim context.\n"
    "Your task is to group entities that can be considered the same, based on both the triples and their "
    "claim contexts.\n"
    "\n"
    "There are two types of equivalence:\n"
    "1. Always equivalent: Entities that refer to the same real-world object or concept in any context "
    "(e.g., \"USA\" and \"United States\").\n"
    "2. Context-dependent equivalent: Entities that refer to the same thing only in the context of the "
    "given triples and claim(s) (e.g., \"study co-author\" and \"microplastics researcher\").\n"
    "\n"
    "Format your output as follows:\n"
    "Group identical entities together inside square brackets [].\n"
    "Separate each entity with a vertical bar |.\n"
    "At the end of each group, append either \"always\" or \"context\" (in quotes) to indicate the type of "
    "equivalence.\n"
    "Write one group per line.\n"
    "If no identical entities are found, output exactly: No identical entities found.",
    "Example output:\n"
    "{examples}\n"
    "\n"
    "{entries}",
};

const PromptTemplate kQaGeneration{
    TemplateName::qa_generation,
    "You are an AI assistant designed to generate multi-hop questions and answers based on triples in the "
    "form of (source_entity, relationship, target_entity), along with the associated claims and context.\n"
    "\n"
    "Your task is to generate a multi-hop question-answer pair based on the given triples. The number of "
    "hops should correspond to the number of triples provided. If there are N triples, generate a question "
    "that connects all N triples, and use them to form a coherent, logical path for the answer.\n"
    "\n"
    "Ensure that:\n"
    "\n"
    "- The question should begin with \"Question:\" and the answer should begin with \"Answer:\".\n"
    "- The question should clearly reference the entities and relationships, and should be designed such "
    "that the answer is a concise, **specific entity or short phrase** (e.g., \"Microsoft\", \"United "
    "States\", \"2025\", \"GLP-1 drugs\").\n"
    "- The answer should **not be abstract** (e.g., \"noticeable effects\", \"study participants\", "
    "\"potential limitations\") but should be a **clear entity, specific term, or concise concept** that "
    "can be derived directly from the triples.\n"
    "- The question and answer should be linked with a pipe (|) on the same line.\n"
    "- Do not add external knowledge or assumptions beyond the given triples.\n"
    "\n"
    "Notes for clarification:\n"
    "\n"
    "- For N triples: The question should logically connect all N triples and form a coherent path that "
    "leads to a **specific, concrete answer** derived solely from the entities in the triples.\n"
    "- Make sure the question is specific and each relationship in the chain is clearly traceable to lead "
    "to the final answer.",
    "Example output format:\n"
    "{examples}\n"
    "\n"
    "Triples: {triples}\n"
    "Claims: {claims}\n"
    "Context: {chunks}",
};

const PromptTemplate kQaValidation{
    TemplateName::qa_validation,
    "You are an AI assistant tasked with reviewing question and answer pairs for ambiguity or vagueness.\n"
    "Your goal is to evaluate whether each pair is clear and self-contained — that is, whether it can "
    "be understood without relying on external or missing context.\n"
    "\n"
    "Use the following criteria to make your judgment:\n"
    "The question and answer must be decontextualized — meaning they should be understandable on "
    "their own, without requiring additional background information.\n"
    "If the answer includes vague references such as \"other countries,\" \"certain individuals,\" or "
    "\"this technology,\" and the question does not provide enough information to specify what these refer "
    "to, then it is considered ambiguous.\n"
    "Similarly, if the question uses pronouns or context-dependent expressions like \"he,\" \"they,\" "
    "\"this,\" or \"that\" without clearly indicating the referent, the pair is not decontextualized and "
    "should be marked as ambiguous.\n"
    "\n"
    "Based on these criteria:\n"
    "If the question-answer pair is decontextualized and unambiguous, output True.\n"
    "If it relies on missing context or includes vague or ambiguous expressions, output False.\n"
    "\n"
    "Output format:\n"
    "True / False",
    "Question: {question}\n"
    "Answer: {answer}",
};

const PromptTemplate kRagAnswer{
    TemplateName::rag_answer,
    "You are an AI assistant designed to generate answers for multi-hop questions. Given a question and "
    "its corresponding context, use only the information in the context to generate a **specific, concise "
    "answer**.\n"
    "\n"
    "The answer should be **a clear, short entity, concept, or term**, such as \"Microsoft\", \"United "
    "States\", or \"2020\". Do not provide detailed explanations or longer sentences.\n"
    "\n"
    "Do not use any external knowledge or make assumptions. Focus solely on the information provided in "
    "the context to answer the question.\n"
    "\n"
    "Output format:\n"
    "Answer",
    "Question: {question}\n"
    "Context: {top_chunks}",
};

const PromptTemplate kJudge{
    TemplateName::judge,
    "You are an AI assistant that receives a question along with two answers: a ground truth answer and a "
    "generated response. Your task is to evaluate whether the generated response is correct or not, and "
    "provide a binary judgment (True or False).\n"
    "\n"
    "Output format:\n"
    "True/False",
    "Question: {question}\n"
    "Ground Truth Answer: {gt_answer}\n"
    "Response: {rag_answer}",
};

const PromptTemplate kFactClassification{
    TemplateName::fact_classification,
    "You are an AI assistant that classifies sentences from news articles.\n"
    "A sentence is a Fact if it states verifiable information about events, people, places, numbers, or "
    "outcomes.\n"
    "A sentence is an Opinion if it expresses a belief, judgment, feeling, speculation, or recommendation.\n"
    "Output format: Fact / Opinion",
    "Sentence: {sentence}",
};

bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Returns the end (index of '}') if s[pos] opens a valid placeholder.
std::size_t placeholder_end(std::string_view s, std::size_t pos) {
    if (s[pos] != '{') return std::string_view::npos;
    std::size_t i = pos + 1;
    while (i < s.size() && is_ident_char(s[i])) ++i;
    if (i == pos + 1 || i >= s.size() || s[i] != '}') return std::string_view::npos;
    return i;
}

std::string substitute(std::string_view text, const Vars& vars) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        auto end = placeholder_end(text, i);
        if (end == std::string_view::npos) {
            out.push_back(text[i]);
            continue;
        }
        std::string name(text.substr(i + 1, end - i - 1));
        auto it = vars.find(name);
        if (it == vars.end()) throw Error("unbound: " + name);
        out += it->second;
        i = end;
    }
    return out;
}

}  // namespace

std::string_view to_string(TemplateName name) {
    for (const auto& [n, s] : kNames)
        if (n == name) return s;
    return "unknown";
}

std::optional<TemplateName> template_from_string(std::string_view name) {
    for (const auto& [n, s] : kNames)
        if (s == name) return n;
    return std::nullopt;
}

std::vector<std::string> PromptTemplate::placeholders() const {
    std::vector<std::string> names;
    std::string_view text = user_text;
    for (std::size_t i = 0; i < text.size(); ++i) {
        auto end = placeholder_end(text, i);
        if (end == std::string_view::npos) continue;
        std::string name(text.substr(i + 1, end - i - 1));
        if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
        i = end;
    }
    return names;
}

const PromptTemplate& prompt_template(TemplateName name) {
    switch (name) {
        case TemplateName::claim_generation: return kClaimGeneration;
        case TemplateName::consistency_check: return kConsistencyCheck;
        case TemplateName::triple_extraction: return kTripleExtraction;
        case TemplateName::equivalence_search: return kEquivalenceSearch;
        case TemplateName::qa_generation: return kQaGeneration;
        case TemplateName::qa_validation: return kQaValidation;
        case TemplateName::rag_answer: return kRagAnswer;
        case TemplateName::judge: return kJudge;
        case TemplateName::fact_classification: return kFactClassification;
    }
    throw Error("unknown template");
}

RenderedPrompt render(const PromptTemplate& tmpl, const Vars& vars) {
    // Check every placeholder up front so the error names the first unbound
    // one in template order, regardless of substitution order.
    for (const auto& name : tmpl.placeholders())
        if (!vars.contains(name)) throw Error("unbound: " + name);
    return {substitute(tmpl.system_text, vars), substitute(tmpl.user_text, vars)};
}

}  // namespace grade
