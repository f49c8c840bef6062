#include "checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace actseg {

namespace {

constexpr char kMagic[8] = {'A', 'C', 'T', 'S', 'E', 'G', '0', '1'};

std::string escape(const std::string& s) {
    std::string out;
    for (unsigned char c : s) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (c < 0x20) {
                    char buf[5];
                    std::snprintf(buf, sizeof buf, "\\x%02x", c);
                    out += buf;
                } else {
                    out += static_cast<char>(c);
                }
        }
    }
    return out;
}

std::string unescape(const std::string& s) {
    std::string out;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '\\') {
            out += s[i];
            continue;
        }
        if (++i >= s.size()) throw DataError("checkpoint: dangling escape");
        switch (s[i]) {
            case '\\': out += '\\'; break;
            case 'n': out += '\n'; break;
            case 'r': out += '\r'; break;
            case 't': out += '\t'; break;
            case 'x': {
                if (i + 2 >= s.size()) throw DataError("checkpoint: bad \\x escape");
                out += static_cast<char>(std::stoi(s.substr(i + 1, 2), nullptr, 16));
                i += 2;
                break;
            }
            default: throw DataError("checkpoint: unknown escape");
        }
    }
    return out;
}

std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void put_u64_le(std::string& out, uint64_t x) {
    for (int i = 0; i < 8; ++i) out += static_cast<char>((x >> (8 * i)) & 0xFF);
}

uint64_t get_u64_le(const unsigned char* p) {
    uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<uint64_t>(p[i]) << (8 * i);
    return x;
}

void put_f64_le(std::string& out, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, sizeof bits);
    put_u64_le(out, bits);
}

double get_f64_le(const unsigned char* p) {
    const uint64_t bits = get_u64_le(p);
    double d;
    std::memcpy(&d, &bits, sizeof d);
    return d;
}

struct Manifest {
    std::vector<std::pair<std::string, std::string>> entries; // preserves order
    std::map<std::string, std::string> index;

    void put(const std::string& k, const std::string& v) {
        entries.emplace_back(k, v);
        index[k] = v;
    }
    const std::string& get(const std::string& k) const {
        auto it = index.find(k);
        if (it == index.end()) throw DataError("checkpoint: missing manifest key '" + k + "'");
        return it->second;
    }
    bool has(const std::string& k) const { return index.count(k) > 0; }
    long get_long(const std::string& k) const { return std::stol(get(k)); }
    double get_double(const std::string& k) const { return std::strtod(get(k).c_str(), nullptr); }
};

} // namespace

void save_checkpoint(const Model& m, const std::string& path, const TrainState* train) {
    std::string manifest;
    auto kv = [&](const std::string& k, const std::string& v) {
        manifest += k;
        manifest += '=';
        manifest += v;
        manifest += '\n';
    };
    kv("format_version", "1");
    kv("family", family_to_string(m.family));
    kv("embed", std::to_string(m.dims.embed));
    kv("enc_hidden", std::to_string(m.dims.enc_hidden));
    kv("dec_hidden", std::to_string(m.dims.dec_hidden));
    kv("act_hidden", std::to_string(m.dims.act_hidden));
    kv("att_hidden", std::to_string(m.dims.att_hidden));
    kv("enc_layers", std::to_string(m.dims.enc_layers));
    kv("tau", fmt_double(m.tau));
    kv("epsilon", fmt_double(m.epsilon));
    kv("t_max", std::to_string(m.t_max));
    kv("char_budget", std::to_string(m.char_budget));
    kv("feed_attention", m.act_dec_feed_attention ? "1" : "0");
    for (int i = 4; i < m.src_vocab.size(); ++i) {
        kv("vocab_src." + std::to_string(i - 4), escape(m.src_vocab.symbol(i)));
    }
    for (int i = 4; i < m.trg_vocab.size(); ++i) {
        kv("vocab_trg." + std::to_string(i - 4), escape(m.trg_vocab.symbol(i)));
    }
    for (size_t i = 0; i < m.merges.merges.size(); ++i) {
        kv("merge." + std::to_string(i),
           escape(m.merges.merges[i].first) + " " + escape(m.merges.merges[i].second));
    }
    if (train) {
        kv("train.step", std::to_string(train->opt.t));
        kv("train.batch_index", std::to_string(train->batch_index));
        kv("train.instances_seen", std::to_string(train->instances_seen));
        kv("train.validations", std::to_string(train->validations));
        kv("train.last_val_score", fmt_double(train->last_val_score));
        kv("train.best_score", fmt_double(train->schedule.best));
        kv("train.has_best", train->schedule.has_best ? "1" : "0");
        kv("train.bad_validations", std::to_string(train->schedule.bad_validations));
        kv("train.halvings", std::to_string(train->schedule.halvings));
        kv("train.stop", train->schedule.stop ? "1" : "0");
        kv("train.lr_multiplier", fmt_double(train->schedule.lr_multiplier));
    }
    std::vector<const Tensor*> arrays;
    auto declare = [&](const std::string& name, const Tensor& t) {
        kv("array", name + " " + std::to_string(t.rows) + " " + std::to_string(t.cols));
        arrays.push_back(&t);
    };
    for (const Parameter* p : m.params) declare(p->name, p->value);
    if (train) {
        // moment buffers may be unallocated before the first update
        for (const Parameter* p : m.params) {
            if (p->m.same_shape(p->value)) {
                declare("adam.m." + p->name, p->m);
                declare("adam.v." + p->name, p->v);
            }
        }
    }

    std::string blob;
    blob.reserve(manifest.size() + 16);
    blob.append(kMagic, sizeof kMagic);
    put_u64_le(blob, manifest.size());
    blob += manifest;
    for (const Tensor* t : arrays) {
        for (double d : t->v) put_f64_le(blob, d);
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw DataError("short write on checkpoint: " + path);
}

std::unique_ptr<Model> load_checkpoint(const std::string& path, TrainState* train,
                                       std::optional<Family> expected_family) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read checkpoint: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string blob = ss.str();
    if (blob.size() < 16 || std::memcmp(blob.data(), kMagic, sizeof kMagic) != 0) {
        throw DataError("checkpoint magic mismatch: " + path);
    }
    const uint64_t mlen = get_u64_le(reinterpret_cast<const unsigned char*>(blob.data() + 8));
    if (16 + mlen > blob.size()) throw DataError("checkpoint truncated in manifest: " + path);

    Manifest man;
    std::vector<std::pair<std::string, std::pair<int, int>>> arrays;
    {
        std::istringstream lines(blob.substr(16, mlen));
        std::string line;
        while (std::getline(lines, line)) {
            if (line.empty()) continue;
            const size_t eq = line.find('=');
            if (eq == std::string::npos) throw DataError("checkpoint: malformed manifest line");
            const std::string key = line.substr(0, eq);
            const std::string val = line.substr(eq + 1);
            if (key == "array") {
                std::istringstream f(val);
                std::string name;
                int r = 0, c = 0;
                f >> name >> r >> c;
                if (name.empty() || r <= 0 || c <= 0) {
                    throw DataError("checkpoint: malformed array declaration '" + val + "'");
                }
                arrays.emplace_back(name, std::make_pair(r, c));
            } else {
                man.put(key, val);
            }
        }
    }
    if (man.get("format_version") != "1") {
        throw DataError("checkpoint: unsupported format version " + man.get("format_version"));
    }
    const Family family = family_from_string(man.get("family"));
    if (expected_family && family != *expected_family) {
        throw DataError("checkpoint family is '" + family_to_string(family) + "', expected '" +
                        family_to_string(*expected_family) + "'");
    }
    ModelDims dims;
    dims.embed = static_cast<int>(man.get_long("embed"));
    dims.enc_hidden = static_cast<int>(man.get_long("enc_hidden"));
    dims.dec_hidden = static_cast<int>(man.get_long("dec_hidden"));
    dims.act_hidden = static_cast<int>(man.get_long("act_hidden"));
    dims.att_hidden = static_cast<int>(man.get_long("att_hidden"));
    dims.enc_layers = static_cast<int>(man.get_long("enc_layers"));

    Vocabulary src, trg;
    for (int i = 0;; ++i) {
        const std::string k = "vocab_src." + std::to_string(i);
        if (!man.has(k)) break;
        src.add(unescape(man.get(k)));
    }
    for (int i = 0;; ++i) {
        const std::string k = "vocab_trg." + std::to_string(i);
        if (!man.has(k)) break;
        trg.add(unescape(man.get(k)));
    }

    auto model = build_model(family, dims, std::move(src), std::move(trg),
                             man.get_double("tau"), man.get_double("epsilon"), 0,
                             man.get("feed_attention") == "1");
    model->t_max = static_cast<int>(man.get_long("t_max"));
    model->char_budget = static_cast<int>(man.get_long("char_budget"));
    for (int i = 0;; ++i) {
        const std::string k = "merge." + std::to_string(i);
        if (!man.has(k)) break;
        const std::string v = man.get(k);
        const size_t sp = v.find(' ');
        if (sp == std::string::npos) throw DataError("checkpoint: malformed merge entry");
        model->merges.merges.emplace_back(unescape(v.substr(0, sp)), unescape(v.substr(sp + 1)));
    }

    // arrays: parameter values first, then optional optimizer moments
    size_t offset = 16 + mlen;
    auto read_into = [&](const std::string& name, Tensor& t, int rows, int cols) {
        if (t.rows != rows || t.cols != cols) {
            throw DataError("checkpoint: array '" + name + "' has shape " +
                            std::to_string(rows) + "x" + std::to_string(cols) + ", expected " +
                            t.shape_str());
        }
        const size_t bytes = static_cast<size_t>(rows) * static_cast<size_t>(cols) * 8;
        if (offset + bytes > blob.size()) {
            throw DataError("checkpoint truncated in array '" + name + "'");
        }
        for (size_t i = 0; i < t.size(); ++i) {
            t.v[i] = get_f64_le(reinterpret_cast<const unsigned char*>(blob.data() + offset + 8 * i));
        }
        offset += bytes;
    };
    for (const auto& [name, shape] : arrays) {
        if (name.rfind("adam.m.", 0) == 0 || name.rfind("adam.v.", 0) == 0) {
            const bool is_m = name.rfind("adam.m.", 0) == 0;
            Parameter* p = model->find_param(name.substr(7));
            if (!p) throw DataError("checkpoint: unknown optimizer array '" + name + "'");
            Tensor& t = is_m ? p->m : p->v;
            t = Tensor(p->value.rows, p->value.cols);
            read_into(name, t, shape.first, shape.second);
        } else {
            Parameter* p = model->find_param(name);
            if (!p) throw DataError("checkpoint: unknown array '" + name + "'");
            read_into(name, p->value, shape.first, shape.second);
        }
    }
    if (offset != blob.size()) {
        throw DataError("checkpoint has " + std::to_string(blob.size() - offset) +
                        " trailing bytes");
    }

    if (train) {
        *train = TrainState{};
        if (man.has("train.step")) {
            train->opt.t = man.get_long("train.step");
            train->batch_index = man.get_long("train.batch_index");
            train->instances_seen = man.get_long("train.instances_seen");
            train->validations = man.get_long("train.validations");
            train->last_val_score = man.get_double("train.last_val_score");
            train->schedule.best = man.get_double("train.best_score");
            train->schedule.has_best = man.get("train.has_best") == "1";
            train->schedule.bad_validations =
                static_cast<int>(man.get_long("train.bad_validations"));
            train->schedule.halvings = static_cast<int>(man.get_long("train.halvings"));
            train->schedule.stop = man.get("train.stop") == "1";
            train->schedule.lr_multiplier = man.get_double("train.lr_multiplier");
        }
    }
    return model;
}

} // namespace actseg
