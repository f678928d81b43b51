#include "patfig/html_extract.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>
#include <unordered_map>

#include "patfig/tokenizer.hpp"
#include "patfig/util.hpp"

namespace patfig {

namespace {

bool is_space_char(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

char upper_char(unsigned char c) {
    return (c >= 'a' && c <= 'z') ? static_cast<char>(c - 'a' + 'A') : static_cast<char>(c);
}

char lower_char(unsigned char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
}

std::string lower_ascii(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (unsigned char c : s) {
        out += lower_char(c);
    }
    return out;
}

void append_utf8(std::string& out, unsigned long cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xc0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3f));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xe0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
        out += static_cast<char>(0x80 | (cp & 0x3f));
    } else if (cp < 0x110000) {
        out += static_cast<char>(0xf0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3f));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
        out += static_cast<char>(0x80 | (cp & 0x3f));
    }
}

/// Decode "&name;" / "&#N;" starting at `pos` (the '&'). On success appends
/// the decoded text and returns the index past the ';'; otherwise returns
/// pos, leaving the caller to emit the '&' literally.
std::size_t decode_entity(const std::string& html, std::size_t pos, std::string& out) {
    const std::size_t semi = html.find(';', pos + 1);
    if (semi == std::string::npos || semi - pos > 10) {
        return pos;
    }
    const std::string body = html.substr(pos + 1, semi - pos - 1);
    if (body == "amp") {
        out += '&';
    } else if (body == "lt") {
        out += '<';
    } else if (body == "gt") {
        out += '>';
    } else if (body == "quot") {
        out += '"';
    } else if (body == "apos") {
        out += '\'';
    } else if (body == "nbsp") {
        out += ' ';
    } else if (body.size() > 1 && body[0] == '#') {
        unsigned long cp = 0;
        try {
            cp = body[1] == 'x' || body[1] == 'X' ? std::stoul(body.substr(2), nullptr, 16)
                                                  : std::stoul(body.substr(1), nullptr, 10);
        } catch (const std::exception&) {
            return pos;
        }
        append_utf8(out, cp);
    } else {
        return pos;
    }
    return semi + 1;
}

enum class TagKind { BriefSection, Line, Paragraph, FigRef, Unknown };

TagKind classify_tag(const std::string& name) {
    const std::string n = lower_ascii(name);
    if (n == "brief-description-of-drawings") return TagKind::BriefSection;
    if (n == "description-line") return TagKind::Line;
    if (n == "description-paragraph") return TagKind::Paragraph;
    if (n == "figref") return TagKind::FigRef;
    return TagKind::Unknown;
}

/// Whitespace-collapsing text sink. Spaces become pending until the next
/// visible character, so output never has leading, trailing, or doubled
/// spaces.
struct TextSink {
    std::string text;
    bool pending_space = false;

    void put(char c) {
        if (is_space_char(static_cast<unsigned char>(c))) {
            if (!text.empty()) {
                pending_space = true;
            }
            return;
        }
        if (pending_space) {
            text += ' ';
            pending_space = false;
        }
        text += c;
    }

    void put_string(const std::string& s) {
        for (char c : s) {
            put(c);
        }
    }
};

struct OpenBlock {
    TagKind kind = TagKind::Unknown;
    std::size_t out_index = 0;  // placeholder slot reserved at open time
    TextSink sink;
    std::vector<FigRefSpan> figrefs;
    bool inside_brief = false;
};

struct Parser {
    const std::string& html;
    std::size_t pos = 0;
    PatentHtmlDoc doc;
    std::vector<OpenBlock> stack;  // section below line/paragraph
    bool in_figref = false;
    TextSink figref_sink;
    std::size_t figref_out_index = 0;
    int brief_depth = 0;

    explicit Parser(const std::string& h) : html(h) {}

    OpenBlock* innermost_text_block() { return stack.empty() ? nullptr : &stack.back(); }

    void emit_char(char c) {
        for (OpenBlock& block : stack) {
            block.sink.put(c);
        }
        if (in_figref) {
            figref_sink.put(c);
        }
    }

    void open_block(TagKind kind) {
        OpenBlock block;
        block.kind = kind;
        block.inside_brief = brief_depth > 0 && kind != TagKind::BriefSection;
        block.out_index = doc.blocks.size();
        doc.blocks.emplace_back();
        stack.push_back(std::move(block));
        if (kind == TagKind::BriefSection) {
            ++brief_depth;
        }
    }

    void close_top_block() {
        OpenBlock block = std::move(stack.back());
        stack.pop_back();
        if (block.kind == TagKind::BriefSection) {
            --brief_depth;
        }
        HtmlBlock& out = doc.blocks[block.out_index];
        switch (block.kind) {
            case TagKind::BriefSection: out.tag = HtmlTag::BriefSection; break;
            case TagKind::Line: out.tag = HtmlTag::DescriptionLine; break;
            case TagKind::Paragraph: out.tag = HtmlTag::DescriptionParagraph; break;
            default: out.tag = HtmlTag::Other; break;
        }
        out.text = std::move(block.sink.text);
        out.figrefs = std::move(block.figrefs);
        out.inside_brief_section = block.inside_brief;
        out.position = block.out_index;
    }

    void open_figref() {
        if (in_figref) {
            close_figref();
        }
        in_figref = true;
        figref_sink = TextSink{};
        figref_out_index = doc.blocks.size();
        doc.blocks.emplace_back();
    }

    void close_figref() {
        if (!in_figref) {
            return;
        }
        in_figref = false;
        HtmlBlock& out = doc.blocks[figref_out_index];
        out.tag = HtmlTag::FigRef;
        out.text = figref_sink.text;
        out.inside_brief_section = brief_depth > 0;
        out.position = figref_out_index;
        OpenBlock* parent = innermost_text_block();
        if (parent != nullptr && !figref_sink.text.empty()) {
            // The same visible characters flowed into both sinks, so the
            // label sits at the parent's tail.
            FigRefSpan span;
            span.end = parent->sink.text.size();
            span.begin = span.end - figref_sink.text.size();
            span.label = figref_sink.text;
            parent->figrefs.push_back(std::move(span));
        }
    }

    void handle_open(TagKind kind, bool self_closing) {
        close_figref();  // a figref never spans other markup
        switch (kind) {
            case TagKind::BriefSection:
                open_block(kind);
                if (self_closing) {
                    close_top_block();
                }
                break;
            case TagKind::Line:
            case TagKind::Paragraph:
                // A new block implicitly ends an unclosed one.
                if (!stack.empty() &&
                    (stack.back().kind == TagKind::Line || stack.back().kind == TagKind::Paragraph)) {
                    close_top_block();
                }
                open_block(kind);
                if (self_closing) {
                    close_top_block();
                }
                break;
            case TagKind::FigRef:
                open_figref();
                if (self_closing) {
                    close_figref();
                }
                break;
            case TagKind::Unknown:
                break;
        }
    }

    void handle_close(TagKind kind) {
        if (kind == TagKind::FigRef) {
            close_figref();
            return;
        }
        close_figref();
        if (kind == TagKind::Unknown) {
            return;
        }
        // Close up to and including the nearest matching open block.
        for (std::size_t depth = stack.size(); depth > 0; --depth) {
            if (stack[depth - 1].kind == kind) {
                while (stack.size() >= depth) {
                    close_top_block();
                }
                return;
            }
        }
    }

    void parse_tag() {
        // pos is at '<'
        std::size_t i = pos + 1;
        if (i < html.size() && html.compare(i, 3, "!--") == 0) {
            const std::size_t end = html.find("-->", i + 3);
            pos = end == std::string::npos ? html.size() : end + 3;
            return;
        }
        if (i < html.size() && (html[i] == '!' || html[i] == '?')) {
            const std::size_t end = html.find('>', i);
            pos = end == std::string::npos ? html.size() : end + 1;
            return;
        }
        bool closing = false;
        if (i < html.size() && html[i] == '/') {
            closing = true;
            ++i;
        }
        std::size_t name_start = i;
        while (i < html.size() &&
               (std::isalnum(static_cast<unsigned char>(html[i])) || html[i] == '-' ||
                html[i] == '_')) {
            ++i;
        }
        if (i == name_start) {  // stray '<'
            emit_char('<');
            pos = pos + 1;
            return;
        }
        const std::string name = html.substr(name_start, i - name_start);
        // Skip attributes, honoring quoted values.
        bool self_closing = false;
        while (i < html.size() && html[i] != '>') {
            if (html[i] == '"' || html[i] == '\'') {
                const char quote = html[i];
                ++i;
                while (i < html.size() && html[i] != quote) {
                    ++i;
                }
                if (i < html.size()) {
                    ++i;
                }
                continue;
            }
            if (html[i] == '/' && i + 1 < html.size() && html[i + 1] == '>') {
                self_closing = true;
            }
            ++i;
        }
        pos = i < html.size() ? i + 1 : html.size();

        const TagKind kind = classify_tag(name);
        if (closing) {
            handle_close(kind);
        } else {
            handle_open(kind, self_closing);
        }
        if (kind == TagKind::Unknown) {
            // Inline markup separates words; treat the tag as whitespace.
            emit_char(' ');
        }
    }

    PatentHtmlDoc run() {
        while (pos < html.size()) {
            const char c = html[pos];
            if (c == '<') {
                parse_tag();
            } else if (c == '&') {
                std::string decoded;
                const std::size_t next = decode_entity(html, pos, decoded);
                if (next == pos) {
                    emit_char('&');
                    ++pos;
                } else {
                    for (char d : decoded) {
                        emit_char(d);
                    }
                    pos = next;
                }
            } else {
                emit_char(c);
                ++pos;
            }
        }
        close_figref();
        while (!stack.empty()) {
            close_top_block();
        }
        bool any_description = false;
        for (const HtmlBlock& block : doc.blocks) {
            if (block.tag == HtmlTag::BriefSection || block.tag == HtmlTag::DescriptionLine ||
                block.tag == HtmlTag::DescriptionParagraph) {
                any_description = true;
                break;
            }
        }
        if (!any_description) {
            doc.blocks.clear();
            doc.flags.push_back("no-description-section");
        }
        return std::move(doc);
    }
};

const std::set<std::string>& abbreviation_set() {
    static const std::set<std::string> abbrevs = {
        "fig", "figs",  "figure", "figures", "no",  "nos", "u.s", "e.g", "i.e",
        "etc", "vs",    "mr",     "mrs",     "ms",  "dr",  "prof", "inc", "ltd",
        "co",  "corp",  "al",     "approx",
    };
    return abbrevs;
}

/// Word immediately before offset `end` (letters, digits, internal periods).
std::string word_before(const std::string& text, std::size_t end) {
    std::size_t start = end;
    while (start > 0) {
        const unsigned char c = static_cast<unsigned char>(text[start - 1]);
        if (std::isalnum(c) || c == '.') {
            --start;
        } else {
            break;
        }
    }
    return text.substr(start, end - start);
}

bool is_abbreviation_before(const std::string& text, std::size_t period_pos) {
    std::string word = word_before(text, period_pos);
    while (!word.empty() && word.back() == '.') {
        word.pop_back();
    }
    if (word.empty()) {
        return false;
    }
    if (word.size() == 1 && std::isalpha(static_cast<unsigned char>(word[0]))) {
        return true;  // single initial, as in "J. Smith"
    }
    return abbreviation_set().count(lower_ascii(word)) > 0;
}

bool is_sentence_punct(char c) {
    return c == '.' || c == '?' || c == '!';
}

/// Leading figure label of `text`: FIG / FIGURE (any case), optional period,
/// then digits and an optional letter. Returns the normalized label, or an
/// empty string when the text does not start with one.
std::string leading_figure_label(const std::string& text) {
    std::size_t i = 0;
    while (i < text.size() && is_space_char(static_cast<unsigned char>(text[i]))) {
        ++i;
    }
    std::string word;
    std::size_t j = i;
    while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) {
        word += upper_char(static_cast<unsigned char>(text[j]));
        ++j;
    }
    if (word != "FIG" && word != "FIGURE") {
        return "";
    }
    if (j < text.size() && text[j] == '.') {
        ++j;
    }
    while (j < text.size() && is_space_char(static_cast<unsigned char>(text[j]))) {
        ++j;
    }
    std::string digits;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) {
        digits += text[j];
        ++j;
    }
    if (digits.empty()) {
        return "";
    }
    std::string suffix;
    if (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) {
        const char letter = upper_char(static_cast<unsigned char>(text[j]));
        // A single trailing letter is a sub-figure suffix only when the next
        // character does not continue a word ("FIG. 2A shows" vs "FIG. 2 And").
        if (j + 1 >= text.size() || !std::isalnum(static_cast<unsigned char>(text[j + 1]))) {
            suffix += letter;
        }
    }
    return "FIG" + digits + suffix;
}

}  // namespace

bool PatentHtmlDoc::has_brief_section() const {
    for (const HtmlBlock& block : blocks) {
        if (block.tag == HtmlTag::BriefSection) {
            return true;
        }
    }
    return false;
}

PatentHtmlDoc parse_patent_html(const std::string& html_text) {
    Parser parser(html_text);
    return parser.run();
}

std::string normalize_figure_label(const std::string& label) {
    std::string out;
    out.reserve(label.size());
    for (unsigned char c : label) {
        if (c == '.' || is_space_char(c)) {
            continue;
        }
        out += upper_char(c);
    }
    if (out.compare(0, 6, "FIGURE") == 0) {
        out = "FIG" + out.substr(6);
    }
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(const std::string& text) {
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    const std::size_t n = text.size();
    std::size_t start = 0;
    while (start < n && is_space_char(static_cast<unsigned char>(text[start]))) {
        ++start;
    }
    if (start >= n) {
        return spans;
    }
    std::size_t i = start;
    while (i < n) {
        if (!is_sentence_punct(text[i])) {
            ++i;
            continue;
        }
        std::size_t run_end = i;
        while (run_end + 1 < n && is_sentence_punct(text[run_end + 1])) {
            ++run_end;
        }
        std::size_t k = run_end + 1;
        bool saw_space = false;
        while (k < n && is_space_char(static_cast<unsigned char>(text[k]))) {
            saw_space = true;
            ++k;
        }
        const bool followed_by_upper = k < n && text[k] >= 'A' && text[k] <= 'Z';
        bool boundary = saw_space && followed_by_upper;
        if (boundary) {
            // A lone period after an abbreviation or initial continues the
            // sentence; runs with ? or ! (or "...") always end one.
            const bool lone_period = run_end == i && text[i] == '.';
            if (lone_period && is_abbreviation_before(text, i)) {
                boundary = false;
            }
        }
        if (boundary) {
            spans.emplace_back(start, run_end + 1);
            start = k;
            i = k;
        } else {
            i = run_end + 1;
        }
    }
    if (start < n) {
        std::size_t end = n;
        while (end > start && is_space_char(static_cast<unsigned char>(text[end - 1]))) {
            --end;
        }
        if (end > start) {
            spans.emplace_back(start, end);
        }
    }
    return spans;
}

std::vector<std::string> split_sentences(const std::string& text) {
    std::vector<std::string> out;
    for (const auto& [begin, end] : sentence_spans(text)) {
        out.push_back(text.substr(begin, end - begin));
    }
    return out;
}

std::string extract_brief(const PatentHtmlDoc& doc, const std::string& figure_label) {
    if (!doc.has_brief_section()) {
        throw Error("document has no brief description section");
    }
    const std::string wanted = normalize_figure_label(figure_label);
    for (const HtmlBlock& block : doc.blocks) {
        if (!block.inside_brief_section ||
            (block.tag != HtmlTag::DescriptionLine && block.tag != HtmlTag::DescriptionParagraph)) {
            continue;
        }
        if (leading_figure_label(block.text) == wanted) {
            return block.text;
        }
    }
    throw Error("no brief description entry for label '" + figure_label + "'");
}

DetailedExtraction extract_detailed(const PatentHtmlDoc& doc,
                                    const std::vector<std::string>& figure_labels) {
    if (figure_labels.empty()) {
        throw Error("extract_detailed needs at least one figure label");
    }

    std::size_t section_position = 0;
    bool has_section = false;
    for (const HtmlBlock& block : doc.blocks) {
        if (block.tag == HtmlTag::BriefSection) {
            section_position = block.position;
            has_section = true;
            break;
        }
    }

    DetailedExtraction result;
    std::unordered_map<std::string, std::vector<std::string>> pieces;  // label -> sentences
    std::string current;  // normalized label currently being described
    std::ptrdiff_t last_switch = -1;
    std::ptrdiff_t paragraph_index = -1;
    std::vector<std::ptrdiff_t> attributed_indices;

    for (const HtmlBlock& block : doc.blocks) {
        if (block.tag != HtmlTag::DescriptionParagraph || block.inside_brief_section) {
            continue;
        }
        if (has_section && block.position < section_position) {
            continue;
        }
        ++paragraph_index;
        ++result.total_paragraphs;

        const auto spans = sentence_spans(block.text);
        // Distinct referenced labels per sentence, in span order.
        std::vector<std::vector<std::string>> sentence_refs(spans.size());
        for (const FigRefSpan& ref : block.figrefs) {
            for (std::size_t s = 0; s < spans.size(); ++s) {
                if (ref.begin >= spans[s].first && ref.begin < spans[s].second) {
                    std::string norm = normalize_figure_label(ref.label);
                    auto& refs = sentence_refs[s];
                    if (std::find(refs.begin(), refs.end(), norm) == refs.end()) {
                        refs.push_back(std::move(norm));
                    }
                    break;
                }
            }
        }

        if (!spans.empty() && sentence_refs[0].size() == 1) {
            current = sentence_refs[0][0];
            last_switch = paragraph_index;
        }

        bool any_kept = false;
        std::size_t discarded_here = 0;
        for (std::size_t s = 0; s < spans.size(); ++s) {
            if (sentence_refs[s].size() >= 2) {
                ++result.sentences_discarded_multifig;
                ++discarded_here;
                continue;
            }
            if (current.empty()) {
                continue;
            }
            pieces[current].push_back(
                block.text.substr(spans[s].first, spans[s].second - spans[s].first));
            any_kept = true;
        }

        if (!spans.empty() && discarded_here == spans.size()) {
            ++result.paragraphs_discarded_multifig;
        } else if (any_kept) {
            ++result.paragraphs_attributed;
            attributed_indices.push_back(paragraph_index);
        } else {
            ++result.paragraphs_dropped_before_first;
        }
    }

    for (std::ptrdiff_t index : attributed_indices) {
        if (index > last_switch) {
            ++result.trailing_paragraphs;
        }
    }

    for (const std::string& label : figure_labels) {
        const std::string norm = normalize_figure_label(label);
        auto it = pieces.find(norm);
        if (it == pieces.end() || it->second.empty()) {
            result.unmatched_labels.push_back(label);
            continue;
        }
        std::ostringstream joined;
        for (std::size_t i = 0; i < it->second.size(); ++i) {
            if (i > 0) {
                joined << ' ';
            }
            joined << it->second[i];
        }
        result.by_label[norm] = joined.str();
    }
    return result;
}

std::string clip_detailed(const BpeTokenizer& tokenizer, const std::string& text,
                          std::size_t limit) {
    if (limit == 0) {
        throw Error("clip limit must be positive");
    }
    std::string current = text;
    while (true) {
        std::vector<int> tokens = tokenizer.encode(current);
        if (tokens.size() <= limit) {
            return current;
        }
        tokens.resize(limit);
        current = tokenizer.decode(tokens);
    }
}

std::pair<double, double> sentence_prf(const std::string& extracted, const std::string& gold) {
    auto normalize = [](const std::string& sentence) {
        std::string out;
        bool pending_space = false;
        for (unsigned char c : sentence) {
            if (is_space_char(c)) {
                if (!out.empty()) {
                    pending_space = true;
                }
                continue;
            }
            if (pending_space) {
                out += ' ';
                pending_space = false;
            }
            out += lower_char(c);
        }
        while (!out.empty() && is_sentence_punct(out.back())) {
            out.pop_back();
        }
        while (!out.empty() && out.back() == ' ') {
            out.pop_back();
        }
        return out;
    };

    auto count_sentences = [&](const std::string& text) {
        std::map<std::string, std::size_t> counts;
        std::size_t total = 0;
        for (const std::string& sentence : split_sentences(text)) {
            const std::string norm = normalize(sentence);
            if (!norm.empty()) {
                ++counts[norm];
                ++total;
            }
        }
        return std::make_pair(counts, total);
    };

    const auto [extracted_counts, extracted_total] = count_sentences(extracted);
    const auto [gold_counts, gold_total] = count_sentences(gold);
    if (extracted_total == 0 && gold_total == 0) {
        return {1.0, 1.0};
    }
    std::size_t overlap = 0;
    for (const auto& [sentence, count] : extracted_counts) {
        auto it = gold_counts.find(sentence);
        if (it != gold_counts.end()) {
            overlap += std::min(count, it->second);
        }
    }
    const double precision =
        extracted_total > 0 ? static_cast<double>(overlap) / extracted_total : 0.0;
    const double recall = gold_total > 0 ? static_cast<double>(overlap) / gold_total : 0.0;
    return {precision, recall};
}

ExtractionResult extract_descriptions(const PatentHtmlDoc& doc,
                                      const std::vector<std::string>& figure_labels) {
    ExtractionResult result;
    result.detailed_diagnostics = extract_detailed(doc, figure_labels);

    for (const std::string& label : figure_labels) {
        const std::string norm = normalize_figure_label(label);
        std::string brief;
        bool have_brief = false;
        try {
            brief = extract_brief(doc, label);
            have_brief = true;
        } catch (const Error&) {
        }
        auto it = result.detailed_diagnostics.by_label.find(norm);
        const bool have_detailed = it != result.detailed_diagnostics.by_label.end();

        if (have_brief && have_detailed) {
            result.by_label[norm] = ExtractionResult::Pair{brief, it->second};
        } else if (!have_brief && !have_detailed) {
            result.unmatched.push_back({label, "missing brief and detailed"});
        } else if (!have_brief) {
            result.unmatched.push_back({label, "missing brief"});
        } else {
            result.unmatched.push_back({label, "missing detailed"});
        }
    }
    return result;
}

}  // namespace patfig
