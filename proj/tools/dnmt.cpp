// dnmt: document-level NMT toolkit command line.
//
// Exit codes: 0 success, 1 usage error, 2 data/contract error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dnmt/checkpoint.hpp"
#include "dnmt/config.hpp"
#include "dnmt/decoding.hpp"
#include "dnmt/evaluation.hpp"
#include "dnmt/manifest.hpp"
#include "dnmt/synthbench.hpp"
#include "dnmt/training.hpp"

namespace fs = std::filesystem;
using namespace dnmt;

using Real = float; // checkpoint payloads are float32 either way

namespace {

fs::path default_run_root() {
    const char* env = std::getenv("DNMT_RUN_DIR");
    return env && *env ? fs::path(env) : fs::path("runs");
}

BpeModel load_bpe(const fs::path& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::io, "cannot open bpe model " + path.string());
    return BpeModel::load(in);
}

Vocab load_vocab(const fs::path& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::io, "cannot open vocabulary " + path.string());
    return Vocab::load(in);
}

// Sentences from either a corpus file or a translation output file.
std::vector<std::string> load_sentence_list(const fs::path& path) {
    std::vector<Json> records = read_jsonl(path);
    std::vector<std::string> out;
    for (const Json& j : records) {
        if (j.contains("hyp")) {
            out.push_back(j.at("hyp").get<std::string>());
        } else if (j.contains("sentences")) {
            for (const auto& s : j.at("sentences")) out.push_back(s.get<std::string>());
        } else {
            raise(ErrorKind::data, path.string() + ": expected 'hyp' or 'sentences' records");
        }
    }
    return out;
}

RunManifest make_manifest(const std::string& command, const KvConfig& kv,
                          const std::vector<fs::path>& inputs,
                          const std::vector<fs::path>& checkpoints, std::uint64_t seed) {
    RunManifest m;
    m.command = command;
    m.config = kv.values();
    for (const fs::path& p : inputs) m.input_digests[p.string()] = file_digest(p);
    for (const fs::path& p : checkpoints) m.checkpoint_ids.push_back(file_digest(p));
    m.seed = seed;
    return m;
}

struct CtxLmHolder {
    std::optional<ContextLM<Real>> lm;

    const ContextLM<Real>* attach_if_needed(Model<Real>& model, const std::string& path,
                                            std::uint64_t vocab_hash) {
        if (!model.config().uses_context_lm()) return nullptr;
        if (path.empty()) {
            raise(ErrorKind::usage, "variant " + model.config().name() + " needs --ctxlm");
        }
        lm = ckpt::load_context_lm<Real>(path);
        model.attach_context_lm(&*lm, vocab_hash);
        return &*lm;
    }
};

// --- subcommands ---

int cmd_bpe_train(const std::vector<std::string>& inputs, std::size_t merges,
                  const std::string& output) {
    std::vector<std::vector<std::string>> tokenized;
    for (const auto& input : inputs) {
        for (const Document& d : load_corpus(input)) {
            for (const std::string& s : d.sentences) tokenized.push_back(whitespace_tokenize(s));
            if (d.title) tokenized.push_back(whitespace_tokenize(*d.title));
        }
    }
    BpeModel model = BpeModel::train(tokenized, merges);
    atomic_write(output, [&](std::ostream& out) { model.save(out); });
    std::cout << "trained " << model.merges().size() << " merges -> " << output << "\n";
    return 0;
}

int cmd_bpe_apply(const std::string& model_path, const std::string& input,
                  const std::string& output) {
    BpeModel model = load_bpe(model_path);
    BpeApplier applier(model);
    DocumentCorpus docs = load_corpus(input);
    for (Document& d : docs) {
        for (std::string& s : d.sentences) s = join_tokens(applier.apply(s));
        if (d.title) d.title = join_tokens(applier.apply(*d.title));
    }
    save_corpus(output, docs);
    std::cout << "wrote " << output << "\n";
    return 0;
}

int cmd_make_samples(const std::string& src, const std::string& tgt, const std::string& bpe_path,
                     const std::string& kind_name, const std::string& out_samples,
                     const std::string& out_vocab, const std::string& in_vocab) {
    ParallelDocumentCorpus corpus = ParallelDocumentCorpus::load(src, tgt);
    BpeModel bpe = load_bpe(bpe_path);
    Vocab vocab = in_vocab.empty() ? build_vocab(corpus, bpe) : load_vocab(in_vocab);
    SentenceEncoder enc(bpe, vocab);
    auto samples = build_context_samples(corpus, enc, sample_kind_from_name(kind_name));
    save_samples(out_samples, samples);
    if (!out_vocab.empty()) {
        atomic_write(out_vocab, [&](std::ostream& out) { vocab.save(out); });
    }
    std::cout << "wrote " << samples.size() << " samples -> " << out_samples << "\n";
    return 0;
}

int cmd_train(const std::string& samples_path, const std::string& dev_path,
              const std::string& vocab_path, KvConfig kv, const fs::path& run_dir,
              const std::string& finetune_from) {
    RunLock lock(run_dir);
    Vocab vocab = load_vocab(vocab_path);
    TrainConfig cfg = train_config_from_kv(kv);
    if (!finetune_from.empty()) cfg.finetune_from = finetune_from;
    ModelConfig mc = model_config_from_kv(kv, vocab.size());

    std::vector<fs::path> inputs{samples_path, vocab_path};
    if (!dev_path.empty()) inputs.push_back(dev_path);
    std::vector<fs::path> ckpts;
    if (!cfg.finetune_from.empty()) ckpts.push_back(cfg.finetune_from);
    make_manifest(cfg.finetune_from.empty() ? "train" : "finetune", kv, inputs, ckpts, cfg.seed)
        .write(run_dir);

    Model<Real> model(mc, cfg.seed);
    CtxLmHolder holder;
    holder.attach_if_needed(model, kv.get("ctxlm", ""), vocab.hash());
    if (!cfg.finetune_from.empty()) {
        WarmStartReport report = finetune_init_from_checkpoint(model, cfg.finetune_from, vocab.hash());
        std::cout << "warm start: " << report.loaded.size() << " loaded, "
                  << report.copied_to_context.size() << " copied to context encoder, "
                  << report.fresh.size() << " fresh\n";
    }
    auto train_samples = load_samples(samples_path);
    std::vector<ContextSample> dev_samples;
    if (!dev_path.empty()) dev_samples = load_samples(dev_path);
    TrainResult res = train_model(model, train_samples, dev_samples, cfg, run_dir, vocab.hash());
    std::cout << "final loss " << res.final_train_loss;
    if (res.best_val_loss) std::cout << ", best val " << *res.best_val_loss;
    std::cout << "\ncheckpoint " << res.final_checkpoint.string() << "\n";
    return 0;
}

int cmd_translate(const std::string& ckpt_path, const std::string& input,
                  const std::string& bpe_path, const std::string& vocab_path,
                  const std::string& kind_name, std::size_t beam, double alpha,
                  std::size_t max_len, const std::string& ctxlm_path, const std::string& output,
                  const fs::path& run_dir) {
    Vocab vocab = load_vocab(vocab_path);
    auto loaded = ckpt::load_model<Real>(ckpt_path);
    if (loaded.vocab_hash != vocab.hash()) {
        raise(ErrorKind::data, "checkpoint vocabulary does not match " + vocab_path);
    }
    CtxLmHolder holder;
    holder.attach_if_needed(loaded.model, ctxlm_path, vocab.hash());
    BpeModel bpe = load_bpe(bpe_path);
    SentenceEncoder enc(bpe, vocab);
    DocumentCorpus docs = load_corpus(input);
    SampleKind kind = sample_kind_from_name(kind_name);
    auto samples = build_source_context_samples(docs, enc, kind);

    KvConfig snapshot;
    snapshot.set("beam", std::to_string(beam));
    snapshot.set("alpha", std::to_string(alpha));
    snapshot.set("kind", kind_name);
    make_manifest("translate", snapshot, {input, bpe_path, vocab_path}, {ckpt_path}, 0)
        .write(run_dir);

    BeamConfig bc;
    bc.beam = beam;
    bc.length_alpha = alpha;
    bc.max_len = max_len;
    std::size_t missing_break = 0;
    std::vector<Json> records;
    HbCache<Real> hb_cache;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        ModelInput in = assemble_input(loaded.model.config(), samples[i]);
        const Tensor<Real>* hb = hb_cache.get(loaded.model, in, i);
        auto hyps = beam_search(loaded.model, samples[i], bc, hb);
        std::vector<int> out_ids = hyps.front().tokens;
        if (kind == SampleKind::two_to_two) {
            Split2to2 split = split_2to2(out_ids);
            if (!split.had_break) ++missing_break;
            out_ids = split.current;
        }
        Json j;
        j["doc"] = samples[i].doc_id;
        j["index"] = samples[i].sent_index;
        j["hyp"] = enc.decode(out_ids);
        j["score"] = normalized_score(hyps.front(), alpha);
        records.push_back(std::move(j));
    }
    write_jsonl(output, records);
    if (missing_break > 0) {
        std::cerr << "warning: " << missing_break << " outputs had no BREAK to split on\n";
    }
    std::cout << "wrote " << records.size() << " hypotheses -> " << output << "\n";
    return 0;
}

int cmd_backtranslate(const std::string& ckpt_path, const std::string& mono_path,
                      const std::string& level_name, const std::string& bpe_path,
                      const std::string& vocab_path, std::size_t beam, const std::string& out_src,
                      const std::string& out_tgt, const fs::path& run_dir) {
    Vocab vocab = load_vocab(vocab_path);
    auto loaded = ckpt::load_model<Real>(ckpt_path);
    if (loaded.vocab_hash != vocab.hash()) {
        raise(ErrorKind::data, "checkpoint vocabulary does not match " + vocab_path);
    }
    BpeModel bpe = load_bpe(bpe_path);
    SentenceEncoder enc(bpe, vocab);
    DocumentCorpus mono = load_corpus(mono_path);
    BtLevel level;
    if (level_name == "sent") {
        level = BtLevel::sent;
    } else if (level_name == "doc") {
        level = BtLevel::doc;
    } else {
        raise(ErrorKind::usage, "--level must be sent or doc");
    }

    KvConfig snapshot;
    snapshot.set("level", level_name);
    snapshot.set("beam", std::to_string(beam));
    make_manifest("backtranslate", snapshot, {mono_path, bpe_path, vocab_path}, {ckpt_path}, 0)
        .write(run_dir);

    BeamConfig bc;
    bc.beam = beam;
    SyntheticCorpus synth = backtranslate(loaded.model, mono, level, enc, bc, file_digest(ckpt_path));
    save_corpus(out_src, synth.corpus.source_docs);
    save_corpus(out_tgt, synth.corpus.target_docs);
    Json sidecar;
    sidecar["provenance"] = synth.provenance;
    sidecar["generator_checkpoint"] = synth.generator_id;
    sidecar["documents"] = synth.corpus.source_docs.size();
    atomic_write_text(run_dir / "bt_provenance.json", sidecar.dump(2) + "\n");
    std::cout << "wrote " << out_src << " / " << out_tgt << " (" << synth.provenance << ")\n";
    return 0;
}

int cmd_eval_bleu(const std::string& hyp_path, const std::string& ref_path,
                  const std::string& mode_name, const std::string& json_out) {
    std::vector<std::string> hyps = load_sentence_list(hyp_path);
    std::vector<std::string> refs = load_sentence_list(ref_path);
    BleuMode mode = mode_name == "char" ? BleuMode::character : BleuMode::word;
    EvalReport report = bleu(hyps, refs, mode);
    report.split_label = "overall";
    std::cout << format_reports_text({report});
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.2f", report.bleu);
    std::cout << "BLEU = " << buf << "\n";
    if (!json_out.empty()) atomic_write_text(json_out, report.to_json().dump(2) + "\n");
    return 0;
}

int cmd_eval_apt(const std::string& src_path, const std::string& hyp_path,
                 const std::string& ref_path, const std::string& lexicon_path,
                 const std::string& src_hyp_align, const std::string& src_ref_align,
                 const std::string& json_out) {
    std::vector<std::string> srcs = load_sentence_list(src_path);
    std::vector<std::string> hyps = load_sentence_list(hyp_path);
    std::vector<std::string> refs = load_sentence_list(ref_path);
    PronounLexicon lexicon = PronounLexicon::from_json(Json::parse(read_file(lexicon_path)));
    auto acc = apt(srcs, hyps, refs, lexicon, load_alignments(src_hyp_align),
                   load_alignments(src_ref_align));
    Json j;
    if (acc) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%.2f", *acc);
        std::cout << "APT = " << buf << "\n";
        j["apt"] = *acc;
    } else {
        std::cout << "APT undefined: no scorable pronoun occurrences\n";
        j["apt"] = nullptr;
    }
    if (!json_out.empty()) atomic_write_text(json_out, j.dump(2) + "\n");
    return 0;
}

int cmd_eval_contrastive(const std::string& ckpt_path, const std::string& set_path,
                         const std::string& bpe_path, const std::string& vocab_path,
                         const std::string& kind_name, const std::string& ctxlm_path,
                         const std::string& json_out) {
    Vocab vocab = load_vocab(vocab_path);
    auto loaded = ckpt::load_model<Real>(ckpt_path);
    if (loaded.vocab_hash != vocab.hash()) {
        raise(ErrorKind::data, "checkpoint vocabulary does not match " + vocab_path);
    }
    CtxLmHolder holder;
    holder.attach_if_needed(loaded.model, ctxlm_path, vocab.hash());
    BpeModel bpe = load_bpe(bpe_path);
    SentenceEncoder enc(bpe, vocab);
    auto instances = load_contrastive(set_path);
    double acc = contrastive_eval(
        model_scorer(loaded.model, enc, sample_kind_from_name(kind_name)), instances);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.2f", acc);
    std::cout << "contrastive accuracy = " << buf << " (" << instances.size() << " instances)\n";
    if (!json_out.empty()) {
        Json j;
        j["contrastive_accuracy"] = acc;
        j["instances"] = instances.size();
        atomic_write_text(json_out, j.dump(2) + "\n");
    }
    return 0;
}

int cmd_split_eval(const std::string& hyp_path, const std::string& ref_corpus_path,
                   const std::string& mode_name, const std::string& json_out) {
    std::vector<std::string> hyps = load_sentence_list(hyp_path);
    DocumentCorpus ref_docs = load_corpus(ref_corpus_path);
    std::vector<std::string> refs;
    for (const Document& d : ref_docs)
        for (const std::string& s : d.sentences) refs.push_back(s);
    HeadlineSplit split = split_headline_body(ref_docs);
    BleuMode mode = mode_name == "char" ? BleuMode::character : BleuMode::word;
    auto reports = split_eval(hyps, refs,
                              {{"headline", split.headline}, {"body", split.body}}, mode);
    std::cout << format_reports_text(reports);
    if (!json_out.empty()) {
        Json arr = Json::array();
        for (const auto& r : reports) arr.push_back(r.to_json());
        atomic_write_text(json_out, arr.dump(2) + "\n");
    }
    return 0;
}

int cmd_synth_gen(std::uint64_t seed, std::size_t docs, std::size_t dev_docs, std::size_t test_docs,
                  std::size_t mono_docs, std::size_t sents, const fs::path& out_dir) {
    SynthGrammar grammar = SynthGrammar::standard(seed);
    GenSpec spec;
    spec.train_docs = docs;
    spec.dev_docs = dev_docs;
    spec.test_docs = test_docs;
    spec.mono_docs = mono_docs;
    spec.sents_per_doc = sents;
    SynthCorpusBundle bundle = gen_corpus(grammar, spec);
    fs::create_directories(out_dir);

    KvConfig snapshot;
    snapshot.set("seed", std::to_string(seed));
    snapshot.set("docs", std::to_string(docs));
    snapshot.set("sents_per_doc", std::to_string(sents));
    make_manifest("synth-gen", snapshot, {}, {}, seed).write(out_dir);

    save_corpus(out_dir / "train.src.jsonl", bundle.train.source_docs);
    save_corpus(out_dir / "train.tgt.jsonl", bundle.train.target_docs);
    save_corpus(out_dir / "dev.src.jsonl", bundle.dev.source_docs);
    save_corpus(out_dir / "dev.tgt.jsonl", bundle.dev.target_docs);
    save_corpus(out_dir / "test.src.jsonl", bundle.test.source_docs);
    save_corpus(out_dir / "test.tgt.jsonl", bundle.test.target_docs);
    save_corpus(out_dir / "mono.tgt.jsonl", bundle.mono_target);
    save_contrastive(out_dir / "contrastive.jsonl", bundle.contrastive);
    atomic_write_text(out_dir / "grammar.txt", bundle.grammar_description + "\n");
    std::cout << "generated bundle (" << bundle.grammar_description << ") -> " << out_dir.string()
              << "\n";
    return 0;
}

int cmd_synth_compare(std::uint64_t seed, const fs::path& data_dir, const std::string& variants_csv,
                      std::size_t steps, std::size_t d_model, std::size_t n_layers, bool with_bt,
                      const fs::path& run_dir) {
    RunLock lock(run_dir);
    SynthGrammar grammar = SynthGrammar::standard(seed);
    SynthCorpusBundle bundle;
    bundle.train = ParallelDocumentCorpus::load(data_dir / "train.src.jsonl",
                                                data_dir / "train.tgt.jsonl");
    bundle.dev =
        ParallelDocumentCorpus::load(data_dir / "dev.src.jsonl", data_dir / "dev.tgt.jsonl");
    bundle.test =
        ParallelDocumentCorpus::load(data_dir / "test.src.jsonl", data_dir / "test.tgt.jsonl");
    bundle.contrastive = load_contrastive(data_dir / "contrastive.jsonl");
    bundle.mono_target = load_corpus(data_dir / "mono.tgt.jsonl");

    TrainConfig cfg;
    cfg.max_steps = steps;
    cfg.checkpoint_every = steps;
    cfg.warmup_steps = std::max<std::size_t>(1, steps / 10);
    cfg.lr_scale = 1.0;
    cfg.batch_tokens = 800;
    cfg.seed = seed;
    cfg.label_smoothing = 0.1;

    ModelConfig proto;
    proto.n_layers = n_layers;
    proto.d_model = d_model;
    proto.d_ff = 2 * d_model;
    proto.n_heads = 4;
    proto.max_positions = 128;

    KvConfig snapshot;
    snapshot.set("seed", std::to_string(seed));
    snapshot.set("steps", std::to_string(steps));
    snapshot.set("variants", variants_csv);
    make_manifest("synth-compare", snapshot,
                  {data_dir / "train.src.jsonl", data_dir / "train.tgt.jsonl"}, {}, seed)
        .write(run_dir);

    std::vector<ComparisonSpec> specs;
    std::istringstream ss(variants_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        ComparisonSpec spec;
        spec.label = item;
        if (item == "baseline") {
            spec.variant = "baseline";
            spec.kind = SampleKind::sent;
            spec.warm_start = false;
        } else if (item == "2to1" || item == "3to1" || item == "2to2" || item == "title") {
            spec.variant = "baseline";
            spec.kind = sample_kind_from_name(item);
            spec.warm_start = true;
        } else {
            spec.variant = item;
            spec.kind = SampleKind::two_to_one;
            spec.warm_start = true;
        }
        specs.push_back(std::move(spec));
    }

    ComparisonReport report = run_comparison<Real>(bundle, specs, cfg, proto, run_dir);
    std::cout << report.to_text();
    Json out = report.to_json();
    if (with_bt) {
        BtExperimentReport bt = run_bt_experiment<Real>(bundle, grammar, cfg, proto, run_dir / "bt");
        out["bt"] = bt.to_json();
        std::cout << "agreement sent-BT " << bt.agreement_sent << "%, doc-BT " << bt.agreement_doc
                  << "%\n";
        std::cout << "contrastive baseline+sentBT " << bt.contrastive_baseline_sent_bt
                  << "%, context+docBT " << bt.contrastive_context_doc_bt << "%\n";
    }
    atomic_write_text(run_dir / "comparison.json", out.dump(2) + "\n");
    atomic_write_text(run_dir / "comparison.txt", report.to_text());
    return 0;
}

int cmd_stats(const std::string& input) {
    CorpusStats st = corpus_stats(load_corpus(input));
    std::cout << "sentences      " << st.sentences << "\n";
    std::cout << "running words  " << st.running_words << "\n";
    std::cout << "avg sent len   " << st.avg_sentence_length << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"document-level NMT toolkit"};
    app.require_subcommand(1);

    // bpe-train
    auto* bpe_train_cmd = app.add_subcommand("bpe-train", "train a joint BPE model");
    std::vector<std::string> bt_inputs;
    std::size_t bt_merges = 32000;
    std::string bt_output;
    bpe_train_cmd->add_option("--input", bt_inputs, "corpus JSONL (repeatable, trained jointly)")
        ->required();
    bpe_train_cmd->add_option("--merges", bt_merges, "number of merge operations");
    bpe_train_cmd->add_option("--output", bt_output, "merge file to write")->required();

    // bpe-apply
    auto* bpe_apply_cmd = app.add_subcommand("bpe-apply", "apply a BPE model to a corpus");
    std::string ba_model, ba_input, ba_output;
    bpe_apply_cmd->add_option("--model", ba_model)->required();
    bpe_apply_cmd->add_option("--input", ba_input)->required();
    bpe_apply_cmd->add_option("--output", ba_output)->required();

    // make-samples
    auto* ms_cmd = app.add_subcommand("make-samples", "build context samples from a parallel corpus");
    std::string ms_src, ms_tgt, ms_bpe, ms_kind = "sent", ms_out, ms_vocab_out, ms_vocab_in;
    ms_cmd->add_option("--src", ms_src)->required();
    ms_cmd->add_option("--tgt", ms_tgt)->required();
    ms_cmd->add_option("--bpe", ms_bpe)->required();
    ms_cmd->add_option("--kind", ms_kind, "sent|2to1|3to1|2to2|title");
    ms_cmd->add_option("--output", ms_out)->required();
    ms_cmd->add_option("--write-vocab", ms_vocab_out, "vocabulary file to emit");
    ms_cmd->add_option("--vocab", ms_vocab_in, "existing vocabulary to reuse");

    // train / finetune
    std::string tr_samples, tr_dev, tr_vocab, tr_config, tr_from, tr_ctxlm;
    std::vector<std::string> tr_overrides;
    std::string tr_run;
    auto add_train_opts = [&](CLI::App* cmd) {
        cmd->add_option("--samples", tr_samples)->required();
        cmd->add_option("--dev", tr_dev);
        cmd->add_option("--vocab", tr_vocab)->required();
        cmd->add_option("--config", tr_config, "key=value config file");
        cmd->add_option("--set", tr_overrides, "config override key=value (repeatable)");
        cmd->add_option("--ctxlm", tr_ctxlm, "context LM checkpoint for seq_emb/single_vec");
        cmd->add_option("--run-dir", tr_run);
    };
    auto* train_cmd = app.add_subcommand("train", "train a model from scratch");
    add_train_opts(train_cmd);
    auto* finetune_cmd = app.add_subcommand("finetune", "warm-start a context model from a baseline");
    add_train_opts(finetune_cmd);
    finetune_cmd->add_option("--from", tr_from, "baseline checkpoint")->required();

    // translate
    auto* tl_cmd = app.add_subcommand("translate", "decode a corpus with beam search");
    std::string tl_ckpt, tl_input, tl_bpe, tl_vocab, tl_kind = "sent", tl_ctxlm, tl_out, tl_run;
    std::size_t tl_beam = 5, tl_maxlen = 0;
    double tl_alpha = 0.6;
    tl_cmd->add_option("--checkpoint", tl_ckpt)->required();
    tl_cmd->add_option("--input", tl_input, "source corpus JSONL")->required();
    tl_cmd->add_option("--bpe", tl_bpe)->required();
    tl_cmd->add_option("--vocab", tl_vocab)->required();
    tl_cmd->add_option("--kind", tl_kind);
    tl_cmd->add_option("--beam", tl_beam);
    tl_cmd->add_option("--alpha", tl_alpha, "length normalization strength");
    tl_cmd->add_option("--max-len", tl_maxlen, "0 = 2*source+10");
    tl_cmd->add_option("--ctxlm", tl_ctxlm);
    tl_cmd->add_option("--output", tl_out)->required();
    tl_cmd->add_option("--run-dir", tl_run);

    // backtranslate
    auto* bt_cmd = app.add_subcommand("backtranslate", "generate synthetic source documents");
    std::string bt2_ckpt, bt2_mono, bt2_level = "sent", bt2_bpe, bt2_vocab, bt2_src, bt2_tgt, bt2_run;
    std::size_t bt2_beam = 5;
    bt_cmd->add_option("--checkpoint", bt2_ckpt, "reverse-direction model")->required();
    bt_cmd->add_option("--mono", bt2_mono, "monolingual target documents")->required();
    bt_cmd->add_option("--level", bt2_level, "sent|doc");
    bt_cmd->add_option("--bpe", bt2_bpe)->required();
    bt_cmd->add_option("--vocab", bt2_vocab)->required();
    bt_cmd->add_option("--beam", bt2_beam);
    bt_cmd->add_option("--out-src", bt2_src)->required();
    bt_cmd->add_option("--out-tgt", bt2_tgt)->required();
    bt_cmd->add_option("--run-dir", bt2_run);

    // eval-bleu
    auto* eb_cmd = app.add_subcommand("eval-bleu", "corpus BLEU with brevity penalty");
    std::string eb_hyp, eb_ref, eb_mode = "word", eb_json;
    eb_cmd->add_option("--hyp", eb_hyp)->required();
    eb_cmd->add_option("--ref", eb_ref)->required();
    eb_cmd->add_option("--mode", eb_mode, "word|char");
    eb_cmd->add_option("--json", eb_json, "also write a JSON report");

    // eval-apt
    auto* ea_cmd = app.add_subcommand("eval-apt", "accuracy of pronoun translation");
    std::string ea_src, ea_hyp, ea_ref, ea_lex, ea_ha, ea_ra, ea_json;
    ea_cmd->add_option("--src", ea_src)->required();
    ea_cmd->add_option("--hyp", ea_hyp)->required();
    ea_cmd->add_option("--ref", ea_ref)->required();
    ea_cmd->add_option("--lexicon", ea_lex, "JSON pronoun lexicon")->required();
    ea_cmd->add_option("--src-hyp-align", ea_ha, "i-j alignment file")->required();
    ea_cmd->add_option("--src-ref-align", ea_ra, "i-j alignment file")->required();
    ea_cmd->add_option("--json", ea_json);

    // eval-contrastive
    auto* ec_cmd = app.add_subcommand("eval-contrastive", "rank correct vs contrastive translations");
    std::string ec_ckpt, ec_set, ec_bpe, ec_vocab, ec_kind = "2to1", ec_ctxlm, ec_json;
    ec_cmd->add_option("--checkpoint", ec_ckpt)->required();
    ec_cmd->add_option("--set", ec_set, "contrastive JSONL")->required();
    ec_cmd->add_option("--bpe", ec_bpe)->required();
    ec_cmd->add_option("--vocab", ec_vocab)->required();
    ec_cmd->add_option("--kind", ec_kind);
    ec_cmd->add_option("--ctxlm", ec_ctxlm);
    ec_cmd->add_option("--json", ec_json);

    // split-eval
    auto* se_cmd = app.add_subcommand("split-eval", "headline/body split evaluation");
    std::string se_hyp, se_ref, se_mode = "word", se_json;
    se_cmd->add_option("--hyp", se_hyp)->required();
    se_cmd->add_option("--ref-corpus", se_ref, "reference corpus with headline indices")->required();
    se_cmd->add_option("--mode", se_mode);
    se_cmd->add_option("--json", se_json);

    // synth-gen
    auto* sg_cmd = app.add_subcommand("synth-gen", "generate the synthetic discourse benchmark");
    std::uint64_t sg_seed = 7;
    std::size_t sg_docs = 200, sg_dev = 20, sg_test = 50, sg_mono = 60, sg_sents = 8;
    std::string sg_out = "synth";
    sg_cmd->add_option("--seed", sg_seed);
    sg_cmd->add_option("--docs", sg_docs, "training documents");
    sg_cmd->add_option("--dev-docs", sg_dev);
    sg_cmd->add_option("--test-docs", sg_test);
    sg_cmd->add_option("--mono-docs", sg_mono);
    sg_cmd->add_option("--sents", sg_sents, "sentences per document");
    sg_cmd->add_option("--out-dir", sg_out);

    // synth-compare
    auto* sc_cmd = app.add_subcommand("synth-compare", "train and compare variants on a bundle");
    std::uint64_t sc_seed = 7;
    std::string sc_data = "synth", sc_variants = "baseline,2to2,multi_in_par", sc_run;
    std::size_t sc_steps = 2000, sc_d = 32, sc_layers = 1;
    bool sc_bt = false;
    sc_cmd->add_option("--seed", sc_seed);
    sc_cmd->add_option("--data-dir", sc_data);
    sc_cmd->add_option("--variants", sc_variants,
                       "comma list of baseline,2to1,3to1,2to2,title or variant names");
    sc_cmd->add_option("--steps", sc_steps, "training budget per variant");
    sc_cmd->add_option("--d-model", sc_d);
    sc_cmd->add_option("--layers", sc_layers);
    sc_cmd->add_flag("--bt", sc_bt, "also run the back-translation experiment");
    sc_cmd->add_option("--run-dir", sc_run);

    // stats
    auto* st_cmd = app.add_subcommand("stats", "corpus statistics");
    std::string st_input;
    st_cmd->add_option("--input", st_input)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return 1;
    }

    auto run_dir_or = [&](const std::string& flag, const std::string& name) {
        return flag.empty() ? default_run_root() / name : fs::path(flag);
    };

    try {
        if (bpe_train_cmd->parsed()) return cmd_bpe_train(bt_inputs, bt_merges, bt_output);
        if (bpe_apply_cmd->parsed()) return cmd_bpe_apply(ba_model, ba_input, ba_output);
        if (ms_cmd->parsed()) {
            return cmd_make_samples(ms_src, ms_tgt, ms_bpe, ms_kind, ms_out, ms_vocab_out,
                                    ms_vocab_in);
        }
        if (train_cmd->parsed() || finetune_cmd->parsed()) {
            KvConfig kv;
            if (!tr_config.empty()) kv = KvConfig::load(tr_config);
            for (const std::string& kvp : tr_overrides) {
                std::size_t eq = kvp.find('=');
                if (eq == std::string::npos) {
                    raise(ErrorKind::usage, "--set expects key=value, got " + kvp);
                }
                kv.set(kvp.substr(0, eq), kvp.substr(eq + 1));
            }
            if (!tr_ctxlm.empty()) kv.set("ctxlm", tr_ctxlm);
            fs::path run = run_dir_or(tr_run, train_cmd->parsed() ? "train" : "finetune");
            return cmd_train(tr_samples, tr_dev, tr_vocab, kv, run, tr_from);
        }
        if (tl_cmd->parsed()) {
            return cmd_translate(tl_ckpt, tl_input, tl_bpe, tl_vocab, tl_kind, tl_beam, tl_alpha,
                                 tl_maxlen, tl_ctxlm, tl_out, run_dir_or(tl_run, "translate"));
        }
        if (bt_cmd->parsed()) {
            return cmd_backtranslate(bt2_ckpt, bt2_mono, bt2_level, bt2_bpe, bt2_vocab, bt2_beam,
                                     bt2_src, bt2_tgt, run_dir_or(bt2_run, "backtranslate"));
        }
        if (eb_cmd->parsed()) return cmd_eval_bleu(eb_hyp, eb_ref, eb_mode, eb_json);
        if (ea_cmd->parsed()) {
            return cmd_eval_apt(ea_src, ea_hyp, ea_ref, ea_lex, ea_ha, ea_ra, ea_json);
        }
        if (ec_cmd->parsed()) {
            return cmd_eval_contrastive(ec_ckpt, ec_set, ec_bpe, ec_vocab, ec_kind, ec_ctxlm,
                                        ec_json);
        }
        if (se_cmd->parsed()) return cmd_split_eval(se_hyp, se_ref, se_mode, se_json);
        if (sg_cmd->parsed()) {
            return cmd_synth_gen(sg_seed, sg_docs, sg_dev, sg_test, sg_mono, sg_sents, sg_out);
        }
        if (sc_cmd->parsed()) {
            return cmd_synth_compare(sc_seed, sc_data, sc_variants, sc_steps, sc_d, sc_layers,
                                     sc_bt, run_dir_or(sc_run, "synth-compare"));
        }
        if (st_cmd->parsed()) return cmd_stats(st_input);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind() == ErrorKind::usage ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
