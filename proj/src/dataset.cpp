#include "twinsplat/dataset.hpp"

#include "twinsplat/errors.hpp"
#include "twinsplat/random.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace twinsplat {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

ScanSource source_from(const std::string& s) {
    if (s == "synthetic") return ScanSource::synthetic;
    if (s == "imported") return ScanSource::imported;
    throw FormatError("manifest: unknown source '" + s + "'");
}

QualityStatus status_from(const std::string& s) {
    if (s == "pending") return QualityStatus::pending;
    if (s == "accepted") return QualityStatus::accepted;
    if (s == "rejected") return QualityStatus::rejected;
    throw FormatError("manifest: unknown status '" + s + "'");
}

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw FormatError("manifest: " + where + " lacks '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw FormatError("manifest: " + where + " has a malformed '" + key + "'");
    }
}

} // namespace

const char* to_string(QualityStatus status) {
    switch (status) {
        case QualityStatus::pending: return "pending";
        case QualityStatus::accepted: return "accepted";
        case QualityStatus::rejected: return "rejected";
    }
    return "pending";
}

const char* to_string(ScanSource source) {
    return source == ScanSource::synthetic ? "synthetic" : "imported";
}

std::vector<ManifestEntry> DatasetManifest::accepted() const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (e.status == QualityStatus::accepted) out.push_back(e);
    return out;
}

ManifestEntry write_scan(const ScanSample& scan, const fs::path& root) {
    scan.validate();
    const fs::path rel = fs::path("scans") / scan.meta.id;
    std::error_code ec;
    fs::create_directories(root / rel, ec);
    if (ec) throw IoError("cannot create " + (root / rel).string() + ": " + ec.message());

    ManifestEntry e;
    e.id = scan.meta.id;
    e.mesh = (rel / "mesh.ply").generic_string();
    e.mask = (rel / "mask.png").generic_string();
    e.image = (rel / "front.png").generic_string();
    e.source = scan.meta.source;
    e.seed = scan.meta.seed;
    e.height_cm = scan.meta.height_cm;
    save_ply(scan.mesh, root / e.mesh);
    write_label_png(scan.label_mask, root / e.mask);
    write_png(scan.front_image, root / e.image);
    return e;
}

DatasetManifest build_dataset(int n, std::uint64_t seed, const fs::path& out_dir, const SynthConfig& config) {
    if (n < 1) throw InputError("build_dataset: n must be >= 1");
    config.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw IoError("build_dataset: cannot create " + out_dir.string());

    DatasetManifest manifest;
    manifest.root = out_dir;
    for (int i = 0; i < n; ++i) {
        ScanSample scan = synth_scan(derive_seed(seed, static_cast<std::uint64_t>(i)), config);
        char id[32];
        std::snprintf(id, sizeof id, "scan_%04d", i);
        scan.meta.id = id;
        ManifestEntry entry = write_scan(scan, out_dir);
        entry.status = QualityStatus::accepted;
        manifest.entries.push_back(std::move(entry));
    }
    save_manifest(manifest);
    return manifest;
}

void save_manifest(const DatasetManifest& manifest) {
    std::set<std::string> ids;
    json entries = json::array();
    for (const auto& e : manifest.entries) {
        if (!ids.insert(e.id).second) throw InputError("save_manifest: duplicate id " + e.id);
        entries.push_back({{"id", e.id},
                           {"mesh", e.mesh},
                           {"mask", e.mask},
                           {"image", e.image},
                           {"source", to_string(e.source)},
                           {"status", to_string(e.status)},
                           {"seed", e.seed},
                           {"height_cm", e.height_cm}});
    }
    const json doc = {{"format_version", manifest.format_version}, {"entries", entries}};
    const fs::path path = manifest.root / kManifestFile;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("save_manifest: cannot open " + path.string());
    out << doc.dump(2) << "\n";
    if (!out) throw IoError("save_manifest: write failed for " + path.string());
}

DatasetManifest load_manifest(const fs::path& path) {
    const fs::path file = fs::is_directory(path) ? path / kManifestFile : path;
    std::ifstream in(file);
    if (!in) throw IoError("load_manifest: cannot open " + file.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw FormatError("load_manifest: " + file.string() + ": " + e.what());
    }
    DatasetManifest m;
    m.root = file.parent_path();
    m.format_version = field<int>(doc, "format_version", "document");
    if (m.format_version != kManifestVersion)
        throw FormatError("load_manifest: unsupported format_version " + std::to_string(m.format_version));
    if (!doc.contains("entries") || !doc["entries"].is_array()) throw FormatError("load_manifest: missing entries");
    std::set<std::string> ids;
    for (const auto& j : doc["entries"]) {
        ManifestEntry e;
        e.id = field<std::string>(j, "id", "entry");
        const std::string where = "entry " + e.id;
        e.mesh = field<std::string>(j, "mesh", where);
        e.mask = field<std::string>(j, "mask", where);
        e.image = field<std::string>(j, "image", where);
        e.source = source_from(field<std::string>(j, "source", where));
        e.status = status_from(field<std::string>(j, "status", where));
        e.seed = field<std::uint64_t>(j, "seed", where);
        e.height_cm = field<double>(j, "height_cm", where);
        if (!ids.insert(e.id).second) throw IntegrityError("load_manifest: duplicate id " + e.id);
        for (const auto* rel : {&e.mesh, &e.mask, &e.image})
            if (!fs::exists(m.root / *rel))
                throw IntegrityError("load_manifest: entry " + e.id + " references missing file " + *rel);
        m.entries.push_back(std::move(e));
    }
    return m;
}

ScanSample load_scan(const DatasetManifest& manifest, const ManifestEntry& entry) {
    ScanSample scan;
    scan.mesh = load_mesh(manifest.root / entry.mesh);
    scan.label_mask = read_label_png(manifest.root / entry.mask);
    scan.front_image = read_png(manifest.root / entry.image);
    if (scan.front_image.channels == 4) {
        Image rgb(scan.front_image.width, scan.front_image.height, 3);
        for (int y = 0; y < rgb.height; ++y)
            for (int x = 0; x < rgb.width; ++x)
                for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = scan.front_image.at(x, y, c);
        scan.front_image = std::move(rgb);
    }
    scan.meta = {entry.id, entry.source, entry.height_cm, entry.seed};
    try {
        scan.validate();
    } catch (const InputError& e) {
        throw IntegrityError("load_scan: entry " + entry.id + ": " + e.what());
    }
    return scan;
}

QualityPredicate null_quality_predicate() {
    return [](const ManifestEntry&) { return true; };
}

FilterResult quality_filter(const DatasetManifest& manifest, const QualityPredicate& predicate) {
    FilterResult result{manifest, {}};
    for (auto& e : result.manifest.entries) {
        QualityDecision d{e.id, QualityStatus::pending, ""};
        try {
            d.status = predicate(e) ? QualityStatus::accepted : QualityStatus::rejected;
        } catch (const std::exception& ex) {
            d.note = ex.what();
        } catch (...) {
            d.note = "predicate failed";
        }
        e.status = d.status;
        result.journal.push_back(std::move(d));
    }
    return result;
}

void append_journal(const std::vector<QualityDecision>& journal, const fs::path& path) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw IoError("append_journal: cannot open " + path.string());
    for (const auto& d : journal) {
        std::string note = d.note;
        for (char& c : note)
            if (c == '\n' || c == ',') c = ' ';
        out << d.id << ',' << to_string(d.status) << ',' << note << '\n';
    }
}

} // namespace twinsplat
