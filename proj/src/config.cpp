#include "angio/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "angio/errors.hpp"

namespace angio {

namespace {

[[noreturn]] void fail_at(const std::string& name, int line, const std::string& msg) {
    throw config_error(name + ":" + std::to_string(line) + ": " + msg);
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
    return true;
}

struct Cursor {
    const std::string& text;
    std::size_t pos = 0;
    const std::string& name;
    int line;
    void skip_ws() {
        while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
    }
    bool done() const { return pos >= text.size(); }
    char peek() const { return text[pos]; }
};

TomlValue parse_scalar_token(const std::string& tok, const std::string& name, int line) {
    TomlValue v;
    v.line = line;
    if (tok == "true" || tok == "false") {
        v.kind = TomlValue::Kind::boolean;
        v.b = tok == "true";
        return v;
    }
    bool int_like = !tok.empty();
    for (std::size_t i = 0; i < tok.size(); ++i) {
        const char c = tok[i];
        if (i == 0 && (c == '+' || c == '-')) continue;
        if (!std::isdigit(static_cast<unsigned char>(c))) {
            int_like = false;
            break;
        }
    }
    if (int_like && tok != "+" && tok != "-") {
        long long out = 0;
        const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
        if (res.ec == std::errc() && res.ptr == tok.data() + tok.size()) {
            v.kind = TomlValue::Kind::integer;
            v.i = out;
            return v;
        }
        fail_at(name, line, "integer out of range: '" + tok + "'");
    }
    try {
        std::size_t used = 0;
        const double d = std::stod(tok, &used);
        if (used == tok.size()) {
            v.kind = TomlValue::Kind::floating;
            v.d = d;
            return v;
        }
    } catch (const std::exception&) {
    }
    fail_at(name, line, "cannot parse value: '" + tok + "'");
}

TomlValue parse_value(Cursor& c);

TomlValue parse_array(Cursor& c) {
    TomlValue v;
    v.kind = TomlValue::Kind::array;
    v.line = c.line;
    ++c.pos;  // consume '['
    c.skip_ws();
    if (!c.done() && c.peek() == ']') {
        ++c.pos;
        return v;
    }
    while (true) {
        v.arr.push_back(parse_value(c));
        c.skip_ws();
        if (c.done()) fail_at(c.name, c.line, "unterminated array");
        if (c.peek() == ',') {
            ++c.pos;
            c.skip_ws();
            continue;
        }
        if (c.peek() == ']') {
            ++c.pos;
            return v;
        }
        fail_at(c.name, c.line, "expected ',' or ']' in array");
    }
}

TomlValue parse_value(Cursor& c) {
    c.skip_ws();
    if (c.done()) fail_at(c.name, c.line, "missing value");
    const char ch = c.peek();
    if (ch == '"') {
        TomlValue v;
        v.kind = TomlValue::Kind::string;
        v.line = c.line;
        ++c.pos;
        while (true) {
            if (c.done()) fail_at(c.name, c.line, "unterminated string");
            const char s = c.text[c.pos++];
            if (s == '"') break;
            if (s == '\\') {
                if (c.done()) fail_at(c.name, c.line, "dangling escape in string");
                const char e = c.text[c.pos++];
                if (e == '"' || e == '\\')
                    v.s.push_back(e);
                else
                    fail_at(c.name, c.line, std::string("unsupported escape '\\") + e + "'");
            } else {
                v.s.push_back(s);
            }
        }
        return v;
    }
    if (ch == '[') return parse_array(c);
    std::size_t start = c.pos;
    while (!c.done()) {
        const char s = c.peek();
        if (s == ',' || s == ']' || s == '#' || s == ' ' || s == '\t') break;
        ++c.pos;
    }
    if (c.pos == start) fail_at(c.name, c.line, "missing value");
    return parse_scalar_token(c.text.substr(start, c.pos - start), c.name, c.line);
}

}  // namespace

TomlDoc parse_toml_text(const std::string& text, const std::string& name) {
    TomlDoc doc;
    std::string section;
    std::istringstream is(text);
    std::string raw;
    int line = 0;
    while (std::getline(is, raw)) {
        ++line;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        const std::string stripped = trim(raw);
        if (stripped.empty() || stripped.front() == '#') continue;
        if (stripped.front() == '[') {
            if (stripped.back() != ']') fail_at(name, line, "expected ']' to close section header");
            section = trim(stripped.substr(1, stripped.size() - 2));
            if (!valid_key(section)) fail_at(name, line, "invalid section name");
            doc[section];  // materialize even if empty
            continue;
        }
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) fail_at(name, line, "expected 'key = value'");
        const std::string key = trim(stripped.substr(0, eq));
        if (!valid_key(key)) fail_at(name, line, "invalid key '" + key + "'");
        const std::string rest = stripped.substr(eq + 1);
        Cursor c{rest, 0, name, line};
        TomlValue v = parse_value(c);
        c.skip_ws();
        if (!c.done() && c.peek() != '#')
            fail_at(name, line, "trailing characters after value");
        auto& sec = doc[section];
        if (sec.count(key)) fail_at(name, line, "duplicate key '" + key + "'");
        sec.emplace(key, std::move(v));
    }
    return doc;
}

TomlDoc parse_toml_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open config: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_toml_text(ss.str(), path);
}

namespace {

struct Collector {
    std::vector<std::string> errs;
    void add(const std::string& m) { errs.push_back(m); }
    void throw_if_any(const std::string& head) const {
        if (errs.empty()) return;
        std::string msg = head;
        for (const std::string& e : errs) {
            msg += "\n  - ";
            msg += e;
        }
        throw config_error(msg);
    }
};

std::string key_name(const std::string& sec, const std::string& key) {
    return sec.empty() ? key : sec + "." + key;
}

bool take_string(const TomlValue& v, std::string& out, const std::string& kn, Collector& errs) {
    if (v.kind != TomlValue::Kind::string) {
        errs.add(kn + ": expected a string");
        return false;
    }
    out = v.s;
    return true;
}

bool take_int(const TomlValue& v, int& out, const std::string& kn, Collector& errs) {
    if (v.kind != TomlValue::Kind::integer) {
        errs.add(kn + ": expected an integer");
        return false;
    }
    if (v.i < INT32_MIN || v.i > INT32_MAX) {
        errs.add(kn + ": integer out of range");
        return false;
    }
    out = static_cast<int>(v.i);
    return true;
}

bool take_double(const TomlValue& v, double& out, const std::string& kn, Collector& errs) {
    if (v.kind == TomlValue::Kind::floating)
        out = v.d;
    else if (v.kind == TomlValue::Kind::integer)
        out = static_cast<double>(v.i);
    else {
        errs.add(kn + ": expected a number");
        return false;
    }
    return true;
}

bool take_bool(const TomlValue& v, bool& out, const std::string& kn, Collector& errs) {
    if (v.kind != TomlValue::Kind::boolean) {
        errs.add(kn + ": expected true or false");
        return false;
    }
    out = v.b;
    return true;
}

bool take_seed(const TomlValue& v, std::uint64_t& out, const std::string& kn, Collector& errs) {
    if (v.kind != TomlValue::Kind::integer || v.i < 0) {
        errs.add(kn + ": expected a non-negative integer");
        return false;
    }
    out = static_cast<std::uint64_t>(v.i);
    return true;
}

std::string resolve_path(const std::string& p) {
    if (p.empty() || p.front() == '/') return p;
    const char* root = std::getenv("ANGIO_ROOT");
    if (root == nullptr || *root == '\0') return p;
    std::string r = root;
    if (r.back() != '/') r += '/';
    return r + p;
}

std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
    const TomlDoc doc = parse_toml_file(path);
    RunConfig cfg;
    Collector errs;
    for (const auto& [sec, entries] : doc) {
        for (const auto& [key, v] : entries) {
            const std::string kn = key_name(sec, key);
            if (sec == "data") {
                if (key == "train_dir")
                    take_string(v, cfg.train_dir, kn, errs);
                else if (key == "out_dir")
                    take_string(v, cfg.out_dir, kn, errs);
                else if (key == "segmentor")
                    take_string(v, cfg.segmentor_path, kn, errs);
                else
                    errs.add(kn + ": unknown key");
            } else if (sec == "frangi") {
                if (key == "scales") {
                    if (v.kind != TomlValue::Kind::array) {
                        errs.add(kn + ": expected an array of numbers");
                    } else {
                        std::vector<double> scales;
                        bool ok = true;
                        for (const TomlValue& e : v.arr) {
                            double d = 0.0;
                            if (!take_double(e, d, kn, errs)) {
                                ok = false;
                                break;
                            }
                            scales.push_back(d);
                        }
                        if (ok) cfg.frangi.scales = scales;
                    }
                } else if (key == "alpha") {
                    take_double(v, cfg.frangi.alpha, kn, errs);
                } else if (key == "polarity") {
                    std::string s;
                    if (take_string(v, s, kn, errs)) {
                        if (s == "dark")
                            cfg.frangi.polarity = Polarity::dark_vessels;
                        else if (s == "bright")
                            cfg.frangi.polarity = Polarity::bright_vessels;
                        else
                            errs.add(kn + ": expected \"dark\" or \"bright\"");
                    }
                } else if (key == "connectivity") {
                    take_int(v, cfg.frangi.connectivity, kn, errs);
                } else if (key == "multi_seed") {
                    take_int(v, cfg.frangi.multi_seed, kn, errs);
                } else {
                    errs.add(kn + ": unknown key");
                }
            } else if (sec == "masking") {
                if (key == "patch_size")
                    take_int(v, cfg.patch_size, kn, errs);
                else if (key == "gamma")
                    take_double(v, cfg.gamma, kn, errs);
                else if (key == "beta0")
                    take_double(v, cfg.beta0, kn, errs);
                else if (key == "betaE")
                    take_double(v, cfg.betaE, kn, errs);
                else
                    errs.add(kn + ": unknown key");
            } else if (sec == "model") {
                if (key == "embed_dim")
                    take_int(v, cfg.embed_dim, kn, errs);
                else if (key == "hidden_dim")
                    take_int(v, cfg.hidden_dim, kn, errs);
                else
                    errs.add(kn + ": unknown key");
            } else if (sec == "training") {
                if (key == "epochs")
                    take_int(v, cfg.epochs, kn, errs);
                else if (key == "lr")
                    take_double(v, cfg.lr, kn, errs);
                else if (key == "batch_size")
                    take_int(v, cfg.batch_size, kn, errs);
                else if (key == "seed")
                    take_seed(v, cfg.seed, kn, errs);
                else if (key == "workers")
                    take_int(v, cfg.workers, kn, errs);
                else if (key == "cons")
                    take_bool(v, cfg.cons, kn, errs);
                else if (key == "wrec")
                    take_bool(v, cfg.wrec, kn, errs);
                else if (key == "joint")
                    take_bool(v, cfg.joint, kn, errs);
                else if (key == "cons_metric") {
                    std::string s;
                    if (take_string(v, s, kn, errs)) {
                        if (s == "cross_entropy")
                            cfg.metric = ConsMetric::cross_entropy;
                        else if (s == "l1")
                            cfg.metric = ConsMetric::l1;
                        else if (s == "dice")
                            cfg.metric = ConsMetric::dice;
                        else
                            errs.add(kn + ": expected \"cross_entropy\", \"l1\", or \"dice\"");
                    }
                } else {
                    errs.add(kn + ": unknown key");
                }
            } else {
                errs.add(kn + ": unknown section '" + sec + "'");
            }
        }
    }
    errs.throw_if_any("invalid config " + path + ":");
    cfg.train_dir = resolve_path(cfg.train_dir);
    cfg.out_dir = resolve_path(cfg.out_dir);
    cfg.segmentor_path = resolve_path(cfg.segmentor_path);
    return cfg;
}

void validate_run_config(const RunConfig& cfg) {
    Collector errs;
    if (cfg.train_dir.empty()) errs.add("data.train_dir: required");
    if (cfg.frangi.scales.empty()) errs.add("frangi.scales: at least one scale required");
    for (double s : cfg.frangi.scales)
        if (!(s > 0.0)) {
            errs.add("frangi.scales: scales must be positive");
            break;
        }
    if (!(cfg.frangi.alpha >= 0.0 && cfg.frangi.alpha <= 100.0))
        errs.add("frangi.alpha: must lie in [0, 100]");
    if (cfg.frangi.connectivity != 4 && cfg.frangi.connectivity != 8)
        errs.add("frangi.connectivity: must be 4 or 8");
    if (cfg.frangi.multi_seed < 1) errs.add("frangi.multi_seed: must be >= 1");
    if (cfg.patch_size < 1) errs.add("masking.patch_size: must be >= 1");
    if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) errs.add("masking.gamma: must lie in (0, 1)");
    if (!(cfg.beta0 >= 0.0 && cfg.beta0 <= 1.0)) errs.add("masking.beta0: must lie in [0, 1]");
    if (!(cfg.betaE >= 0.0 && cfg.betaE <= 1.0)) errs.add("masking.betaE: must lie in [0, 1]");
    if (cfg.embed_dim < 1) errs.add("model.embed_dim: must be >= 1");
    if (cfg.hidden_dim < 1) errs.add("model.hidden_dim: must be >= 1");
    if (cfg.epochs < 1) errs.add("training.epochs: must be >= 1");
    if (!(cfg.lr > 0.0)) errs.add("training.lr: must be positive");
    if (cfg.batch_size < 1) errs.add("training.batch_size: must be >= 1");
    if (cfg.workers < 1 || cfg.workers > 256) errs.add("training.workers: must lie in [1, 256]");
    if (cfg.cons && cfg.segmentor_path.empty())
        errs.add("data.segmentor: required when training.cons is enabled");
    if (cfg.joint) errs.add("training.joint: joint training is unsupported");
    errs.throw_if_any("invalid run configuration:");
}

std::string run_config_canonical(const RunConfig& cfg) {
    std::ostringstream os;
    os << "data.train_dir=" << cfg.train_dir << "\n";
    os << "data.out_dir=" << cfg.out_dir << "\n";
    os << "data.segmentor=" << cfg.segmentor_path << "\n";
    os << "frangi.scales=";
    for (std::size_t i = 0; i < cfg.frangi.scales.size(); ++i) {
        if (i) os << ",";
        os << fmt_double(cfg.frangi.scales[i]);
    }
    os << "\n";
    os << "frangi.alpha=" << fmt_double(cfg.frangi.alpha) << "\n";
    os << "frangi.polarity=" << (cfg.frangi.polarity == Polarity::dark_vessels ? "dark" : "bright")
       << "\n";
    os << "frangi.connectivity=" << cfg.frangi.connectivity << "\n";
    os << "frangi.multi_seed=" << cfg.frangi.multi_seed << "\n";
    os << "masking.patch_size=" << cfg.patch_size << "\n";
    os << "masking.gamma=" << fmt_double(cfg.gamma) << "\n";
    os << "masking.beta0=" << fmt_double(cfg.beta0) << "\n";
    os << "masking.betaE=" << fmt_double(cfg.betaE) << "\n";
    os << "model.embed_dim=" << cfg.embed_dim << "\n";
    os << "model.hidden_dim=" << cfg.hidden_dim << "\n";
    os << "training.epochs=" << cfg.epochs << "\n";
    os << "training.lr=" << fmt_double(cfg.lr) << "\n";
    os << "training.batch_size=" << cfg.batch_size << "\n";
    os << "training.seed=" << cfg.seed << "\n";
    os << "training.workers=" << cfg.workers << "\n";
    os << "training.cons=" << (cfg.cons ? "true" : "false") << "\n";
    os << "training.wrec=" << (cfg.wrec ? "true" : "false") << "\n";
    os << "training.joint=" << (cfg.joint ? "true" : "false") << "\n";
    os << "training.cons_metric=" << cons_metric_name(cfg.metric) << "\n";
    return os.str();
}

std::string run_config_hash(const RunConfig& cfg) {
    const std::string text = run_config_canonical(cfg);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

const char* cons_metric_name(ConsMetric m) {
    switch (m) {
        case ConsMetric::cross_entropy:
            return "cross_entropy";
        case ConsMetric::l1:
            return "l1";
        case ConsMetric::dice:
            return "dice";
    }
    return "cross_entropy";
}

}  // namespace angio
