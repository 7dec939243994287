#ifndef RMSEC_LABEL_HPP
#define RMSEC_LABEL_HPP

#include <algorithm>
#include <cctype>
#include <compare>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rmsec {

/// Thrown by the text parsers (labels, reward machines, maps, configs).
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A proposition is a single character from a domain alphabet: a room digit
/// '0'..'3', the carry marker '*', or a letter (case significant).
inline bool is_valid_prop(char c) {
    return (c >= '0' && c <= '3') || c == '*' ||
           std::isalpha(static_cast<unsigned char>(c)) != 0;
}

inline bool is_room_digit(char c) { return c >= '0' && c <= '3'; }

/// Sort key giving the canonical event order: room digit first, then '*',
/// then letters case-insensitively with lowercase before uppercase, so e.g.
/// "0Abc", "0*k" and "3bB" are all in canonical form.
inline int prop_rank(char c) {
    if (is_room_digit(c)) return c - '0';
    if (c == '*') return 8;
    const int letter = std::tolower(static_cast<unsigned char>(c)) - 'a';
    const int upper = std::isupper(static_cast<unsigned char>(c)) ? 1 : 0;
    return 16 + 2 * letter + upper;
}

/// Canonical multiset of propositions emitted by a labeling function.
///
/// The canonical serialization is unique per multiset and is what transition
/// tables match against, so "kk0" and "0kk" denote the same label but only
/// the latter spelling is ever stored.
class LabelString {
public:
    LabelString() = default;

    /// Builds a label from events in any order; canonicalizes and validates.
    static LabelString from_events(std::string_view events) {
        std::string s(events);
        int digits = 0;
        for (char c : s) {
            if (!is_valid_prop(c))
                throw ParseError("invalid proposition character '" + std::string(1, c) +
                                 "' in label \"" + std::string(events) + "\"");
            if (is_room_digit(c)) ++digits;
        }
        if (digits > 1)
            throw ParseError("label \"" + std::string(events) + "\" contains more than one room digit");
        std::sort(s.begin(), s.end(), [](char a, char b) { return prop_rank(a) < prop_rank(b); });
        LabelString out;
        out.events_ = std::move(s);
        return out;
    }

    static LabelString parse(std::string_view text) { return from_events(text); }

    /// Canonical serialization (empty string for the empty label).
    const std::string& str() const { return events_; }

    bool empty() const { return events_.empty(); }
    std::size_t size() const { return events_.size(); }

    bool contains(char p) const { return events_.find(p) != std::string::npos; }

    int count(char p) const {
        return static_cast<int>(std::count(events_.begin(), events_.end(), p));
    }

    bool has_room_digit() const { return !events_.empty() && is_room_digit(events_[0]); }

    /// Room digit as int, or -1 when the label carries none.
    int room() const { return has_room_digit() ? events_[0] - '0' : -1; }

    /// Label with every occurrence of the given propositions removed.
    LabelString without(std::string_view props) const {
        std::string s;
        for (char c : events_)
            if (props.find(c) == std::string_view::npos) s.push_back(c);
        LabelString out;
        out.events_ = std::move(s);
        return out;
    }

    bool is_submultiset_of(const LabelString& other) const {
        for (char c : distinct())
            if (count(c) > other.count(c)) return false;
        return true;
    }

    /// Distinct propositions in canonical order.
    std::string distinct() const {
        std::string d;
        for (char c : events_)
            if (d.empty() || d.back() != c) d.push_back(c);
        return d;
    }

    /// All proper sub-multisets (the label itself excluded, the empty label
    /// included), in a deterministic order. For a multiset with counts
    /// c_1..c_k there are prod(c_i + 1) - 1 of them.
    std::vector<LabelString> proper_submultisets() const {
        const std::string d = distinct();
        std::vector<int> counts;
        counts.reserve(d.size());
        for (char c : d) counts.push_back(count(c));
        std::vector<int> take(d.size(), 0);
        std::vector<LabelString> out;
        while (true) {
            std::string s;
            for (std::size_t i = 0; i < d.size(); ++i)
                s.append(static_cast<std::size_t>(take[i]), d[i]);
            if (s != events_) {
                LabelString l;
                l.events_ = std::move(s);
                out.push_back(std::move(l));
            }
            std::size_t i = 0;
            while (i < take.size() && take[i] == counts[i]) take[i++] = 0;
            if (i == take.size()) break;
            ++take[i];
        }
        return out;
    }

    auto operator<=>(const LabelString&) const = default;

private:
    std::string events_; // canonical form
};

} // namespace rmsec

#endif
