#pragma once

// Problem config files in INI syntax. A line starting with ';' is a comment;
// comments may not follow a value on the same line.
//
//   ; optional catalog entry to start from
//   base = ex43
//   horizon = 1
//   steps = 300
//   ; constant, or proportional: delta(s) = value * s
//   delay.kind = constant
//   delay.value = 0.5
//   ; K, defaults to the largest delay
//   anticipation = 0.5
//
//   [generator]
//   id = shifted-linear
//   shift = 0.5
//
//   [terminal]
//   id = time-scaled-w
//
// Any other key is rejected with a message naming it.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "absde/catalog.hpp"
#include "absde/core.hpp"

namespace absde {

namespace detail {

inline double parse_number(const std::string& key, const std::string& text) {
    char* end = nullptr;
    double v = std::strtod(text.c_str(), &end);
    if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(v))
        fail(Errc::config_error, "key '" + key + "' expects a number, got '" + text + "'");
    return v;
}

inline std::size_t parse_count(const std::string& key, const std::string& text) {
    double v = parse_number(key, text);
    if (v < 0.0 || v != std::floor(v)) fail(Errc::config_error, "key '" + key + "' expects a whole number");
    return static_cast<std::size_t>(v);
}

inline void read_block(const boost::property_tree::ptree& sec, const std::string& where, std::string& id,
                       ParamMap& params) {
    for (const auto& [k, v] : sec) {
        if (!v.empty()) fail(Errc::config_error, "nested key '" + k + "' in [" + where + "]");
        if (k == "id") {
            // a different id drops parameters inherited from the base entry
            if (v.data() != id) params.clear();
            id = v.data();
        }
    }
    for (const auto& [k, v] : sec)
        if (k != "id") params[k] = parse_number(where + "." + k, v.data());
}

}  // namespace detail

inline ProblemConfig parse_config(std::istream& in, const std::string& source = "<config>") {
    boost::property_tree::ptree pt;
    try {
        boost::property_tree::ini_parser::read_ini(in, pt);
    } catch (const boost::property_tree::ini_parser_error& e) {
        fail(Errc::config_error, source + ": " + e.message() + strformat(" (line %lu)", e.line()));
    }

    ProblemConfig c;
    if (auto it = pt.find("base"); it != pt.not_found()) {
        auto entry = find_entry(it->second.data());
        if (!entry) fail(Errc::config_error, "key 'base' names unknown catalog id '" + it->second.data() + "'");
        c = entry->config;
    }
    c.name = source;
    for (const auto& [k, v] : pt) {
        if (k == "generator" || k == "terminal") {
            if (k == "generator") detail::read_block(v, k, c.generator, c.gen_params);
            else detail::read_block(v, k, c.terminal, c.term_params);
            continue;
        }
        if (!v.empty()) fail(Errc::config_error, "unknown section '[" + k + "]'");
        const std::string& s = v.data();
        if (k == "base") continue;
        else if (k == "horizon") c.horizon = detail::parse_number(k, s);
        else if (k == "steps") c.steps = detail::parse_count(k, s);
        else if (k == "delay.kind") c.delay_kind = s;
        else if (k == "delay.value") c.delay = detail::parse_number(k, s);
        else if (k == "anticipation") c.anticipation = detail::parse_number(k, s);
        else fail(Errc::config_error, "unknown key '" + k + "'");
    }
    check_config(c);
    return c;
}

inline ProblemConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::io_error, "cannot open config " + path);
    return parse_config(in, path);
}

/// Canonical text form; parse_config(write_config(c)) reproduces c.
inline std::string write_config(const ProblemConfig& c) {
    std::ostringstream os;
    os << "horizon = " << fmt_double(c.horizon) << "\n";
    os << "steps = " << c.steps << "\n";
    os << "delay.kind = " << c.delay_kind << "\n";
    os << "delay.value = " << fmt_double(c.delay) << "\n";
    if (c.anticipation >= 0.0) os << "anticipation = " << fmt_double(c.anticipation) << "\n";
    os << "\n[generator]\nid = " << c.generator << "\n";
    for (const auto& [k, v] : c.gen_params) os << k << " = " << fmt_double(v) << "\n";
    os << "\n[terminal]\nid = " << c.terminal << "\n";
    for (const auto& [k, v] : c.term_params) os << k << " = " << fmt_double(v) << "\n";
    return os.str();
}

}  // namespace absde
