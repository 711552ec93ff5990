#include "fgprobe/curation.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "fgprobe/errors.hpp"
#include "fgprobe/util.hpp"

namespace fgprobe {

using nlohmann::json;

namespace {

std::string utc_timestamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string numbered(std::span<const std::string> captions) {
  std::vector<std::string> v(captions.begin(), captions.end());
  return render_option_list(v);
}

}  // namespace

std::vector<CurationJob> make_job_pairs(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& classes) {
  std::vector<CurationJob> jobs;
  for (const auto& [name, images] : classes) {
    CurationJob without{name, images, templates::describe_image(), templates::synthesize_without_name(),
                        Variant::kWithoutName};
    CurationJob with{name, images, templates::describe_image(), templates::synthesize_with_name(),
                     Variant::kWithName};
    jobs.push_back(std::move(with));
    jobs.push_back(std::move(without));
  }
  return jobs;
}

CaptionRecord describe_image(const std::string& image_ref, const PromptTemplate& tmpl, const Backend& backend) {
  BackendResponse resp = backend.complete({image_ref, tmpl.render({}), false, 256});
  std::string caption(trim(resp.text));
  if (caption.empty()) throw CurationError(CurationErrc::kEmptyCaption, image_ref, "backend returned an empty caption");
  return {image_ref, std::move(caption), tmpl.id()};
}

SynthesisResult synthesize_class_description(std::span<const std::string> captions, const std::string& class_name,
                                             Variant variant, const PromptTemplate& tmpl, const Backend& backend) {
  if (captions.empty()) throw CurationError(CurationErrc::kNoImages, class_name, "no captions to synthesize from");

  std::map<std::string, std::string, std::less<>> values = {{"image_count", std::to_string(captions.size())},
                                                            {"image_descriptions", numbered(captions)},
                                                            {"class_name", class_name}};
  std::map<std::string, std::string, std::less<>> used;
  for (const auto& name : tmpl.placeholders()) used[name] = values.at(name);
  const std::string prompt = tmpl.render(used);

  SynthesisResult result;
  auto ask = [&](const std::string& p) {
    ++result.attempts;
    // Synthesis is text-only; the image slot stays empty.
    return std::string(trim(backend.complete({"", p, false, 256}).text));
  };

  result.text = ask(prompt);
  if (variant == Variant::kWithoutName && leaks_class_name(result.text, class_name)) {
    result.text = ask(prompt + "\n\nDo not mention \"" + class_name + "\" anywhere in the description.");
    result.leakage_flagged = leaks_class_name(result.text, class_name);
  }
  if (variant == Variant::kWithName && !icontains(result.text, class_name)) {
    result.warnings.push_back("with-name description did not mention the class; prefixed it");
    result.text = class_name + ": " + result.text;
  }
  if (result.text.empty()) throw CurationError(CurationErrc::kEmptyCaption, class_name, "empty synthesized description");
  if (!starts_with_word(result.text, "The") && !starts_with_word(result.text, "This") &&
      variant == Variant::kWithoutName)
    result.warnings.push_back("description does not start with 'The' or 'This'");
  if (word_count(result.text) > kDescriptionWordLimit)
    result.warnings.push_back("description has " + std::to_string(word_count(result.text)) + " words");
  return result;
}

json to_json(const ManifestRecord& r) {
  json captions = json::array();
  for (const auto& c : r.captions)
    captions.push_back({{"image_ref", c.image_ref}, {"caption", c.caption}, {"prompt_version", c.prompt_version}});
  return {{"class_name", r.class_name},
          {"variant", to_string(r.variant)},
          {"description", r.description},
          {"captions", std::move(captions)},
          {"synthesize_template", r.synthesize_template},
          {"model", r.model},
          {"timestamp", r.timestamp},
          {"attempts", r.attempts}};
}

ManifestRecord manifest_record_from_json(const json& j) {
  ManifestRecord r;
  r.class_name = j.at("class_name").get<std::string>();
  r.variant = parse_variant(j.at("variant").get<std::string>());
  r.description = j.at("description").get<std::string>();
  for (const auto& c : j.at("captions"))
    r.captions.push_back({c.at("image_ref").get<std::string>(), c.at("caption").get<std::string>(),
                          c.value("prompt_version", std::string())});
  r.synthesize_template = j.value("synthesize_template", std::string());
  r.model = j.value("model", std::string());
  r.timestamp = j.value("timestamp", std::string());
  r.attempts = j.value("attempts", 1);
  return r;
}

ProgressManifest::ProgressManifest(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(*path_);
  if (!in) return;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      records_.push_back(manifest_record_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ConfigError(path_->string() + ":" + std::to_string(lineno) + ": bad manifest record: " + e.what());
    }
  }
}

std::optional<ManifestRecord> ProgressManifest::find(const std::string& class_name, Variant v) const {
  std::lock_guard lock(mu_);
  for (const auto& r : records_)
    if (r.class_name == class_name && r.variant == v) return r;
  return std::nullopt;
}

std::optional<std::vector<CaptionRecord>> ProgressManifest::captions_for(const std::string& class_name) const {
  std::lock_guard lock(mu_);
  for (const auto& r : records_)
    if (r.class_name == class_name && !r.captions.empty()) return r.captions;
  return std::nullopt;
}

void ProgressManifest::append(const ManifestRecord& r) {
  std::lock_guard lock(mu_);
  if (path_) {
    std::ofstream out(*path_, std::ios::app);
    if (!out) throw Error("cannot append to manifest " + path_->string());
    out << to_json(r).dump() << '\n';
    out.flush();
  }
  records_.push_back(r);
}

std::size_t ProgressManifest::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

Benchmark build_benchmark(std::span<const CurationJob> jobs, const Backend& backend, ProgressManifest& manifest,
                          const std::string& dataset_name, CurationSummary* summary) {
  CurationSummary local;
  CurationSummary& sum = summary ? *summary : local;

  struct Pair {
    const CurationJob* with = nullptr;
    const CurationJob* without = nullptr;
  };
  std::vector<std::string> order;
  std::map<std::string, Pair> pairs;
  for (const auto& job : jobs) {
    if (!pairs.count(job.class_name)) order.push_back(job.class_name);
    Pair& p = pairs[job.class_name];
    (job.variant == Variant::kWithName ? p.with : p.without) = &job;
  }
  for (const auto& name : order) {
    const Pair& p = pairs[name];
    if (!p.with || !p.without)
      throw CurationError(CurationErrc::kIncompletePair, name,
                          std::string("missing ") + (p.with ? "without_name" : "with_name") + " job");
  }

  Benchmark bench;
  bench.dataset_name = dataset_name;
  std::string describe_id, synth_ids;
  for (const auto& name : order) {
    const Pair& p = pairs[name];
    ClassEntry entry;
    entry.class_id = static_cast<int>(bench.classes.size());
    entry.class_name = name;

    std::optional<std::vector<CaptionRecord>> captions = manifest.captions_for(name);
    for (const CurationJob* job : {p.with, p.without}) {
      std::string& slot = job->variant == Variant::kWithName ? entry.description_with_name
                                                             : entry.description_without_name;
      describe_id = job->describe_template.id();
      if (auto done = manifest.find(name, job->variant)) {
        slot = done->description;
        ++sum.resumed_pairs;
        continue;
      }
      if (!captions) {
        if (job->image_refs.empty()) throw CurationError(CurationErrc::kNoImages, name, "job lists no images");
        captions.emplace();
        for (const auto& img : job->image_refs) captions->push_back(describe_image(img, job->describe_template, backend));
      }
      std::vector<std::string> texts;
      for (const auto& c : *captions) texts.push_back(c.caption);
      SynthesisResult r = synthesize_class_description(texts, name, job->variant, job->synthesize_template, backend);
      sum.regenerations += r.attempts - 1;
      for (const auto& w : r.warnings) sum.warnings.push_back(name + " (" + std::string(to_string(job->variant)) + "): " + w);
      if (r.leakage_flagged) {
        sum.review_queue.push_back({name, r.text, "class name still present after one regeneration"});
        throw CurationError(CurationErrc::kPersistentLeakage, name,
                            "without_name description still contains the class name after regeneration");
      }
      manifest.append({name, job->variant, r.text, *captions, job->synthesize_template.id(), backend.name(),
                       utc_timestamp(), r.attempts});
      slot = r.text;
      ++sum.generated_pairs;
    }
    synth_ids = p.with->synthesize_template.id() + "/" + p.without->synthesize_template.id();
    bench.classes.push_back(std::move(entry));
  }
  sum.classes = static_cast<int>(bench.classes.size());

  std::ostringstream note;
  note << "curated by fgprobe; describe=" << describe_id << "; synthesize=" << synth_ids
       << "; model=" << backend.name();
  bench.source_note = note.str();
  return bench;
}

}  // namespace fgprobe
