#include "lfr/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lfr/errors.hpp"

namespace lfr {

namespace {

using nlohmann::json;

std::ifstream open_in(const std::filesystem::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot open file: " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot open file for writing: " + path.string());
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const char* field) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw FormatError(std::string("malformed number in field: ") + field);
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

json require(const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw FormatError(std::string("missing field: ") + key);
  return *it;
}

constexpr char kFeatureMagic[4] = {'D', 'L', 'F', '1'};
constexpr std::size_t kBinaryIdWidth = 32;

}  // namespace

void write_features_jsonl(const std::vector<ImageFeatures>& images,
                          const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& image : images) {
    json features = json::array();
    for (const auto& f : image.features) {
      features.push_back(json{{"x", f.x},
                              {"y", f.y},
                              {"scale", f.scale},
                              {"score", f.score},
                              {"descriptor", f.descriptor}});
    }
    out << json{{"image_id", image.image_id}, {"features", std::move(features)}}.dump() << '\n';
  }
  if (!out) throw IoError("failed writing features: " + path.string());
}

std::vector<ImageFeatures> read_features_jsonl(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<ImageFeatures> images;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("feature jsonl parse error at line " + std::to_string(line_no) + ": " +
                        e.what());
    }
    ImageFeatures image;
    image.image_id = require(obj, "image_id").get<std::string>();
    for (const auto& jf : require(obj, "features")) {
      LocalFeature f;
      f.x = require(jf, "x").get<double>();
      f.y = require(jf, "y").get<double>();
      f.scale = require(jf, "scale").get<double>();
      f.score = require(jf, "score").get<double>();
      f.descriptor = require(jf, "descriptor").get<Descriptor>();
      image.features.push_back(std::move(f));
    }
    images.push_back(std::move(image));
  }
  return images;
}

void write_features_binary(const std::vector<ImageFeatures>& images,
                           const std::filesystem::path& path) {
  auto out = open_out(path, true);
  std::uint32_t total = 0;
  std::uint32_t dim = 0;
  for (const auto& image : images) {
    total += static_cast<std::uint32_t>(image.features.size());
    for (const auto& f : image.features) {
      if (dim == 0) dim = static_cast<std::uint32_t>(f.descriptor.size());
      if (f.descriptor.size() != dim)
        throw InvalidInput("write_features_binary: descriptor dimension mismatch");
    }
    if (image.image_id.size() >= kBinaryIdWidth)
      throw InvalidInput("write_features_binary: image id longer than 31 bytes");
  }
  out.write(kFeatureMagic, 4);
  out.write(reinterpret_cast<const char*>(&total), 4);
  out.write(reinterpret_cast<const char*>(&dim), 4);
  for (const auto& image : images) {
    char id[kBinaryIdWidth] = {0};
    std::memcpy(id, image.image_id.data(), image.image_id.size());
    for (const auto& f : image.features) {
      out.write(id, kBinaryIdWidth);
      const float vals[4] = {static_cast<float>(f.x), static_cast<float>(f.y),
                             static_cast<float>(f.scale), static_cast<float>(f.score)};
      out.write(reinterpret_cast<const char*>(vals), sizeof(vals));
      for (double v : f.descriptor) {
        const float x = static_cast<float>(v);
        out.write(reinterpret_cast<const char*>(&x), 4);
      }
    }
  }
  if (!out) throw IoError("failed writing features: " + path.string());
}

std::vector<ImageFeatures> read_features_binary(const std::filesystem::path& path) {
  auto in = open_in(path, true);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFeatureMagic, 4) != 0)
    throw FormatError("feature file: bad magic (expected DLF1)");
  std::uint32_t total = 0;
  std::uint32_t dim = 0;
  in.read(reinterpret_cast<char*>(&total), 4);
  in.read(reinterpret_cast<char*>(&dim), 4);
  if (!in) throw FormatError("feature file: truncated header");

  std::vector<ImageFeatures> images;
  for (std::uint32_t i = 0; i < total; ++i) {
    char id[kBinaryIdWidth + 1] = {0};
    in.read(id, kBinaryIdWidth);
    float vals[4];
    in.read(reinterpret_cast<char*>(vals), sizeof(vals));
    std::vector<float> desc(dim);
    in.read(reinterpret_cast<char*>(desc.data()), static_cast<std::streamsize>(dim * 4));
    if (!in) throw FormatError("feature file: truncated record");
    if (images.empty() || images.back().image_id != id) {
      images.push_back(ImageFeatures{id, {}});
    }
    LocalFeature f;
    f.x = vals[0];
    f.y = vals[1];
    f.scale = vals[2];
    f.score = vals[3];
    f.descriptor.assign(desc.begin(), desc.end());
    images.back().features.push_back(std::move(f));
  }
  return images;
}

void write_features(const std::vector<ImageFeatures>& images, const std::filesystem::path& path) {
  if (path.extension() == ".dlf") {
    write_features_binary(images, path);
  } else {
    write_features_jsonl(images, path);
  }
}

std::vector<ImageFeatures> read_features(const std::filesystem::path& path) {
  if (path.extension() == ".dlf") return read_features_binary(path);
  return read_features_jsonl(path);
}

void write_geo_csv(const std::vector<GeoRecord>& records, const std::filesystem::path& path,
                   bool with_landmark) {
  auto out = open_out(path);
  out << (with_landmark ? "image_id,lat,lon,landmark_id\n" : "query_id,lat,lon\n");
  for (const auto& r : records) {
    out << r.image_id << ',' << fmt_double(r.lat) << ',' << fmt_double(r.lon);
    if (with_landmark) out << ',' << r.landmark_id;
    out << '\n';
  }
  if (!out) throw IoError("failed writing geo csv: " + path.string());
}

std::vector<GeoRecord> read_geo_csv(const std::filesystem::path& path, bool with_landmark) {
  auto in = open_in(path);
  std::vector<GeoRecord> records;
  std::string line;
  bool first = true;
  const std::size_t want = with_landmark ? 4 : 3;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (first) {
      first = false;
      if (!fields.empty() && (fields[0] == "image_id" || fields[0] == "query_id")) continue;
    }
    if (fields.size() != want)
      throw FormatError("geo csv: expected " + std::to_string(want) + " fields, got " +
                        std::to_string(fields.size()));
    GeoRecord r;
    r.image_id = fields[0];
    r.lat = parse_double(fields[1], "lat");
    r.lon = parse_double(fields[2], "lon");
    if (with_landmark) r.landmark_id = fields[3];
    records.push_back(std::move(r));
  }
  return records;
}

void write_bags_jsonl(const std::vector<FeatureBag>& bags, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& bag : bags) {
    out << json{{"label", bag.label}, {"descriptors", bag.features}}.dump() << '\n';
  }
  if (!out) throw IoError("failed writing bags: " + path.string());
}

std::vector<FeatureBag> read_bags_jsonl(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<FeatureBag> bags;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("bags jsonl parse error at line " + std::to_string(line_no) + ": " +
                        e.what());
    }
    FeatureBag bag;
    bag.label = require(obj, "label").get<std::size_t>();
    bag.features = require(obj, "descriptors").get<std::vector<Descriptor>>();
    bags.push_back(std::move(bag));
  }
  return bags;
}

void write_run_jsonl(const std::vector<RankedMatch>& matches, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& m : matches) {
    out << json{{"query_id", m.query_id},
                {"image_id", m.image_id},
                {"inliers", m.inliers},
                {"total", m.total}}
               .dump()
        << '\n';
  }
  if (!out) throw IoError("failed writing run: " + path.string());
}

RetrievalRun read_run_jsonl(const std::filesystem::path& path) {
  auto in = open_in(path);
  RetrievalRun run;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("run jsonl parse error at line " + std::to_string(line_no) + ": " +
                        e.what());
    }
    const auto qid = require(obj, "query_id").get<std::string>();
    const auto img = require(obj, "image_id").get<std::string>();
    double score = 0.0;
    if (obj.contains("score")) {
      score = obj["score"].get<double>();
    } else {
      score = require(obj, "inliers").get<double>();
    }
    run.queries[qid].push_back(ScoredImage{img, score});
  }
  return run;
}

void write_scored_run_jsonl(const RetrievalRun& run, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& [qid, results] : run.queries) {
    for (const auto& r : results) {
      out << json{{"query_id", qid}, {"image_id", r.image_id}, {"score", r.score}}.dump() << '\n';
    }
  }
  if (!out) throw IoError("failed writing run: " + path.string());
}

void write_scores_csv(const RetrievalRun& run, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "query_id,image_id,score\n";
  for (const auto& [qid, results] : run.queries) {
    for (const auto& r : results)
      out << qid << ',' << r.image_id << ',' << fmt_double(r.score) << '\n';
  }
  if (!out) throw IoError("failed writing scores csv: " + path.string());
}

RetrievalRun read_scores_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  RetrievalRun run;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (first) {
      first = false;
      if (!fields.empty() && fields[0] == "query_id") continue;
    }
    if (fields.size() != 3) throw FormatError("scores csv: expected 3 fields per row");
    run.queries[fields[0]].push_back(ScoredImage{fields[1], parse_double(fields[2], "score")});
  }
  return run;
}

void write_pr_csv(const std::vector<PrPoint>& points, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "threshold,precision,recall\n";
  for (const auto& p : points)
    out << fmt_double(p.threshold) << ',' << fmt_double(p.precision) << ',' << p.recall << '\n';
  if (!out) throw IoError("failed writing pr csv: " + path.string());
}

std::vector<PrPoint> read_pr_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<PrPoint> points;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (first) {
      first = false;
      if (!fields.empty() && fields[0] == "threshold") continue;
    }
    if (fields.size() != 3) throw FormatError("pr csv: expected 3 fields per row");
    PrPoint p;
    p.threshold = parse_double(fields[0], "threshold");
    p.precision = parse_double(fields[1], "precision");
    p.recall = static_cast<std::uint64_t>(parse_double(fields[2], "recall"));
    points.push_back(p);
  }
  return points;
}

}  // namespace lfr
