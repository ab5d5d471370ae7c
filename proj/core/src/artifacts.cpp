#include "srp/artifacts.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include "srp/errors.hpp"
#include "srp/hash.hpp"

namespace srp {

std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

std::string Fnv1a::hex() const { return to_hex(state_); }

std::uint64_t hash_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot read " + path.string());
    }
    Fnv1a h;
    char buf[1 << 14];
    while (in) {
        in.read(buf, sizeof buf);
        h.update(std::string_view(buf, static_cast<std::size_t>(in.gcount())));
    }
    return h.digest();
}

std::uint64_t hash_database_dir(const std::filesystem::path& dir, const Schema& schema) {
    Fnv1a h;
    h.update(hash_file(dir / "schema.json"));
    for (const auto& t : schema.tables) {
        h.update(t.name);
        h.update(hash_file(dir / (t.name + ".csv")));
    }
    return h.digest();
}

RunManifest RunManifest::load(const std::filesystem::path& file) {
    RunManifest m;
    std::ifstream in(file);
    if (!in) {
        return m;
    }
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "config") {
            ls >> m.config_hash_;
        } else if (tag == "stage") {
            StageRecord r;
            ls >> r.stage >> r.input_hash >> r.created;
            for (std::string p; ls >> p;) {
                r.paths.push_back(p);
            }
            if (!ls.eof() || r.stage.empty()) {
                throw DataError("malformed manifest line: " + line);
            }
            m.record(std::move(r));
        } else if (!tag.empty()) {
            throw DataError("malformed manifest line: " + line);
        }
    }
    return m;
}

void RunManifest::save(const std::filesystem::path& file) const {
    std::ofstream out(file);
    if (!out) {
        throw DataError("cannot write " + file.string());
    }
    if (!config_hash_.empty()) {
        out << "config " << config_hash_ << '\n';
    }
    for (const auto& r : stages_) {
        out << "stage " << r.stage << ' ' << r.input_hash << ' ' << r.created;
        for (const auto& p : r.paths) {
            out << ' ' << p;
        }
        out << '\n';
    }
}

const StageRecord* RunManifest::find(const std::string& stage) const {
    for (const auto& r : stages_) {
        if (r.stage == stage) {
            return &r;
        }
    }
    return nullptr;
}

bool RunManifest::is_fresh(const std::string& stage, const std::string& input_hash,
                           const std::filesystem::path& dir) const {
    const StageRecord* r = find(stage);
    if (r == nullptr || r->input_hash != input_hash) {
        return false;
    }
    return std::all_of(r->paths.begin(), r->paths.end(),
                       [&](const std::string& p) { return std::filesystem::exists(dir / p); });
}

void RunManifest::record(StageRecord record) {
    if (record.created == 0) {
        record.created = std::chrono::duration_cast<std::chrono::seconds>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count();
    }
    for (auto& r : stages_) {
        if (r.stage == record.stage) {
            r = std::move(record);
            return;
        }
    }
    stages_.push_back(std::move(record));
}

}  // namespace srp
