#pragma once

#include "twinsplat/config.hpp"
#include "twinsplat/image.hpp"
#include "twinsplat/mesh.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace twinsplat {

inline constexpr int kNumParts = 8;

/// Part ids as stored in label masks; 0 is background. Left and right are the subject's own sides.
enum class BodyPart : std::uint8_t {
    head = 1,
    torso = 2,
    left_arm = 3,
    right_arm = 4,
    left_hand = 5,
    right_hand = 6,
    left_leg = 7,
    right_leg = 8,
};

[[nodiscard]] const char* part_name(int part_id);

/// Subject height in world units; one world unit is 100 cm.
inline constexpr double kSubjectHeight = 1.8;
inline constexpr double kCmPerUnit = 100.0;

enum class ScanSource : std::uint8_t { synthetic, imported };

struct ScanMeta {
    std::string id;
    ScanSource source = ScanSource::synthetic;
    double height_cm = 180.0;
    std::uint64_t seed = 0;
};

/// One ground-truth subject: colored mesh plus its canonical front view and part labels.
struct ScanSample {
    TriMesh mesh;
    LabelMap label_mask;
    Image front_image;
    ScanMeta meta;

    /// Throws InputError when the mesh leaves the [-1,1]^3 box, lacks colors, or the
    /// image and mask disagree in size or label range.
    void validate() const;
};

/// Intersection over union of the front-image silhouette (any nonzero channel) and the nonzero labels.
[[nodiscard]] double silhouette_label_iou(const ScanSample& scan);

/// Seeded capsule-and-ellipsoid humanoid, meshed, normalized to 1.8 units tall and rendered from the front.
[[nodiscard]] ScanSample synth_scan(std::uint64_t seed, const SynthConfig& config = {});

/// Wraps an external colored, labeled mesh: rescales it to the standard height and renders the front view.
[[nodiscard]] ScanSample make_scan(TriMesh mesh, ScanMeta meta, int resolution);

enum class QualityStatus : std::uint8_t { pending, accepted, rejected };

[[nodiscard]] const char* to_string(QualityStatus status);
[[nodiscard]] const char* to_string(ScanSource source);

struct ManifestEntry {
    std::string id;
    std::string mesh;   // paths relative to the manifest directory
    std::string mask;
    std::string image;
    ScanSource source = ScanSource::synthetic;
    QualityStatus status = QualityStatus::pending;
    std::uint64_t seed = 0;
    double height_cm = 180.0;

    bool operator==(const ManifestEntry&) const = default;
};

inline constexpr int kManifestVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";

struct DatasetManifest {
    int format_version = kManifestVersion;
    std::vector<ManifestEntry> entries;
    std::filesystem::path root;  // directory holding manifest.json; not serialized

    [[nodiscard]] std::vector<ManifestEntry> accepted() const;
};

/// Generates n scans with derived seeds under out_dir and writes out_dir/manifest.json.
[[nodiscard]] DatasetManifest build_dataset(int n, std::uint64_t seed, const std::filesystem::path& out_dir,
                                            const SynthConfig& config = {});

/// Serializes with sorted keys and fixed formatting, so equal manifests give equal bytes.
void save_manifest(const DatasetManifest& manifest);
/// Accepts a manifest file or its directory. Missing files raise IntegrityError naming the entry id.
[[nodiscard]] DatasetManifest load_manifest(const std::filesystem::path& path);

[[nodiscard]] ScanSample load_scan(const DatasetManifest& manifest, const ManifestEntry& entry);
/// Writes mesh.ply, mask.png and front.png under root/scans/<id>/ and returns the entry (status pending).
ManifestEntry write_scan(const ScanSample& scan, const std::filesystem::path& root);

/// Returns true to accept. Throwing leaves the entry pending.
using QualityPredicate = std::function<bool(const ManifestEntry&)>;

[[nodiscard]] QualityPredicate null_quality_predicate();

struct QualityDecision {
    std::string id;
    QualityStatus status = QualityStatus::pending;
    std::string note;
};

struct FilterResult {
    DatasetManifest manifest;
    std::vector<QualityDecision> journal;
};

[[nodiscard]] FilterResult quality_filter(const DatasetManifest& manifest, const QualityPredicate& predicate);

/// Appends "id,status,note" lines.
void append_journal(const std::vector<QualityDecision>& journal, const std::filesystem::path& path);

} // namespace twinsplat
