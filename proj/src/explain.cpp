#include "sagc/explain.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "sagc/errors.hpp"
#include "sagc/model.hpp"

namespace sagc {

namespace {

constexpr double kThresholdFraction = 0.15;

std::string html_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string fixed6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

double max_weight(const ExplanationReport& report) {
    double mx = 0.0;
    for (const TokenAttribution& a : report.attributions) mx = std::max(mx, a.weight);
    return mx;
}

ExplanationReport finish_report(std::string id, const EmbeddedSequence& seq,
                                const Checkpoint& checkpoint,
                                const std::vector<std::string>& tokens) {
    const ForwardOutput out = classify_forward(seq, checkpoint.params, checkpoint.config);
    std::vector<double> w = threshold_attention(aggregate_attention(out.A, seq.valid_len));

    ExplanationReport report;
    report.id = std::move(id);
    report.modality = seq.modality;
    report.attributions.reserve(w.size());
    for (int i = 0; i < static_cast<int>(w.size()); ++i) {
        TokenAttribution a;
        a.position = i;
        a.token = seq.modality == Modality::lyric ? tokens[static_cast<std::size_t>(i)]
                                                  : std::to_string(i);
        a.weight = w[static_cast<std::size_t>(i)];
        report.attributions.push_back(std::move(a));
    }

    const Tensor2 probs = softmax_rows(out.logits);
    report.class_probabilities.assign(probs.data.begin(), probs.data.end());
    int best = 0;
    for (int j = 1; j < probs.cols; ++j) {
        if (probs.at(0, j) > probs.at(0, best)) best = j;
    }
    report.predicted_genre = checkpoint.labels.labels[static_cast<std::size_t>(best)];
    return report;
}

} // namespace

std::vector<double> aggregate_attention(const Tensor2& A, int valid_len) {
    if (valid_len < 1 || valid_len > A.cols) {
        throw ContractError("aggregate_attention: valid_len " + std::to_string(valid_len) +
                            " outside [1, " + std::to_string(A.cols) + "]");
    }
    std::vector<double> w(static_cast<std::size_t>(valid_len), 0.0);
    for (int hop = 0; hop < A.rows; ++hop) {
        for (int i = 0; i < valid_len; ++i) {
            w[static_cast<std::size_t>(i)] += A.at(hop, i);
        }
    }
    double total = 0.0;
    for (double v : w) total += v;
    if (total <= 0.0) {
        throw ContractError("aggregate_attention: attention mass over valid positions is zero");
    }
    for (double& v : w) v /= total;
    return w;
}

std::vector<double> threshold_attention(const std::vector<double>& w) {
    double mx = 0.0;
    for (double v : w) mx = std::max(mx, v);
    if (mx <= 0.0) {
        throw ContractError("threshold_attention: all weights are zero");
    }
    const double cutoff = kThresholdFraction * mx;
    std::vector<double> out(w.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] > cutoff) out[i] = w[i];
    }
    return out;
}

ExplanationReport explain(const Checkpoint& checkpoint, const LyricRecord& record,
                          const EmbeddingProvider& provider) {
    if (checkpoint.meta.modality != to_string(Modality::lyric)) {
        throw ContractError("explain: lyric record against a " + checkpoint.meta.modality +
                            " checkpoint");
    }
    const Admission adm = admit_lyric(record);
    if (!adm.accepted) {
        throw ContractError("explain: record " + record.id + " not admitted: " + adm.reason);
    }
    const std::vector<std::string> tokens = tokenize(record.text);
    const EmbeddedSequence seq = embed_lyric(tokens, provider, checkpoint.config.seq_len,
                                             checkpoint.config.input_dim);
    return finish_report(record.id, seq, checkpoint, tokens);
}

ExplanationReport explain(const Checkpoint& checkpoint, const AudioRecord& record) {
    if (checkpoint.meta.modality != to_string(Modality::audio)) {
        throw ContractError("explain: audio record against a " + checkpoint.meta.modality +
                            " checkpoint");
    }
    const Admission adm = admit_audio(record);
    if (!adm.accepted) {
        throw ContractError("explain: record " + record.id + " not admitted: " + adm.reason);
    }
    const EmbeddedSequence seq = embed_audio(record, checkpoint.config.seq_len);
    return finish_report(record.id, seq, checkpoint, {});
}

std::string render_text_heatmap(const ExplanationReport& report) {
    const double mx = max_weight(report);
    std::string out;
    for (std::size_t i = 0; i < report.attributions.size(); ++i) {
        const TokenAttribution& a = report.attributions[i];
        int level = 0;
        if (mx > 0.0 && a.weight > 0.0) {
            if (a.weight > 2.0 * mx / 3.0) {
                level = 3;
            } else if (a.weight > mx / 3.0) {
                level = 2;
            } else {
                level = 1;
            }
        }
        if (i > 0) out += ' ';
        for (int b = 0; b < level; ++b) out += '[';
        out += a.token;
        for (int b = 0; b < level; ++b) out += ']';
    }
    return out;
}

std::string render_html(const ExplanationReport& report) {
    const double mx = max_weight(report);
    std::ostringstream os;
    os << "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n"
       << "<title>Attention for " << html_escape(report.id) << "</title>\n"
       << "<style>\n"
       << "body { font-family: sans-serif; margin: 2em; line-height: 1.8; }\n"
       << ".tok { padding: 0.1em 0.15em; border-radius: 0.2em; }\n"
       << "</style>\n</head>\n<body>\n"
       << "<h1>" << html_escape(report.id) << "</h1>\n"
       << "<p>Predicted genre: <strong>" << html_escape(report.predicted_genre)
       << "</strong></p>\n<p>\n";
    for (const TokenAttribution& a : report.attributions) {
        const double opacity = mx > 0.0 ? a.weight / mx : 0.0;
        os << "<span class=\"tok\" style=\"background: rgba(255,140,0," << fixed6(opacity)
           << ")\">" << html_escape(a.token) << "</span> ";
    }
    os << "\n</p>\n</body>\n</html>\n";
    return os.str();
}

std::string render_audio_csv(const ExplanationReport& report) {
    std::string out = "second,weight\r\n";
    for (const TokenAttribution& a : report.attributions) {
        out += std::to_string(a.position);
        out += ',';
        out += fixed6(a.weight);
        out += "\r\n";
    }
    return out;
}

} // namespace sagc
