#include "battleship/service.hpp"

#include <algorithm>

#include "httplib.h"
#include "json.hpp"

namespace battleship {

using nlohmann::json;

LabelingSession::LabelingSession(const DatasetSplit& data, LoopConfig config, const std::filesystem::path& journal)
    : data_(data), config_(std::move(config)) {
    config_.oracle = OracleMode::Human;
    config_.validate();
    std::unordered_set<PairId> universe;
    for (const auto& p : data_.train_pool) {
        pairs_.emplace(p.pair_id, &p);
        universe.insert(p.pair_id);
    }
    store_.set_universe(std::move(universe));
    if (!journal.empty()) store_.attach_journal(journal);
}

LabelingSession::~LabelingSession() {
    stop();
    join();
}

void LabelingSession::start() {
    std::lock_guard lock(mu_);
    if (running_ || thread_.joinable()) throw Error("session already started");
    running_ = true;
    thread_ = std::thread([this] {
        LoopHooks hooks;
        hooks.on_evaluated = [this](const IterationReport& r) {
            std::lock_guard lock(mu_);
            last_f1_ = r.f1;
            iteration_ = r.iteration;
        };
        hooks.on_report = [this](const IterationReport& r) {
            std::lock_guard lock(mu_);
            reports_.push_back(r);
        };
        try {
            run_active_learning(config_, data_, *this, hooks);
        } catch (const SessionCancelled&) {
        } catch (const std::exception& e) {
            std::lock_guard lock(mu_);
            error_ = e.what();
        }
        std::lock_guard lock(mu_);
        running_ = false;
        finished_ = true;
        batch_.clear();
        waiting_ = false;
        cv_.notify_all();
    });
}

void LabelingSession::stop() {
    std::lock_guard lock(mu_);
    stopping_ = true;
    cv_.notify_all();
}

void LabelingSession::join() {
    if (thread_.joinable()) thread_.join();
}

std::size_t LabelingSession::pending_locked() const {
    return static_cast<std::size_t>(
        std::count_if(batch_.begin(), batch_.end(), [&](const PairId& id) { return !store_.contains(id); }));
}

std::vector<Label> LabelingSession::label(std::span<const PairId> ids, std::size_t iteration) {
    std::unique_lock lock(mu_);
    batch_.assign(ids.begin(), ids.end());
    iteration_ = iteration;
    advance_requested_ = false;
    // Labels journaled before a restart resolve the batch without waiting.
    if (pending_locked() > 0) {
        waiting_ = true;
        cv_.notify_all();
        cv_.wait(lock, [&] { return stopping_ || (advance_requested_ && pending_locked() == 0); });
        waiting_ = false;
        if (stopping_) throw SessionCancelled("session stopped");
    }
    std::vector<Label> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(*store_.find(id));
    calls_ += ids.size();
    batch_.clear();
    return out;
}

std::size_t LabelingSession::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

SessionStatus LabelingSession::status() const {
    std::lock_guard lock(mu_);
    SessionStatus s;
    s.iteration = iteration_;
    s.batch_size = batch_.size();
    s.pending = pending_locked();
    s.labeled_this_iteration = s.batch_size - s.pending;
    s.total_labels = store_.size();
    s.last_f1 = last_f1_;
    s.running = running_;
    s.waiting_for_labels = waiting_;
    s.error = error_;
    return s;
}

std::vector<const CandidatePair*> LabelingSession::queue(std::size_t limit) const {
    std::lock_guard lock(mu_);
    std::vector<const CandidatePair*> out;
    if (!waiting_) return out;
    for (const auto& id : batch_) {
        if (out.size() >= limit) break;
        if (!store_.contains(id)) out.push_back(pairs_.at(id));
    }
    return out;
}

SubmitOutcome LabelingSession::submit(const PairId& id, Label label, const std::string& /*annotator*/) {
    std::lock_guard lock(mu_);
    if (std::find(batch_.begin(), batch_.end(), id) == batch_.end()) return SubmitOutcome::NotPending;
    try {
        const auto outcome = store_.record(id, label, Provenance::Human);
        cv_.notify_all();
        return outcome == RecordOutcome::Inserted ? SubmitOutcome::Accepted : SubmitOutcome::Duplicate;
    } catch (const LabelConflict&) {
        return SubmitOutcome::Conflict;
    }
}

bool LabelingSession::advance() {
    std::lock_guard lock(mu_);
    if (!waiting_ || pending_locked() > 0) return false;
    advance_requested_ = true;
    cv_.notify_all();
    return true;
}

std::vector<IterationReport> LabelingSession::reports() const {
    std::lock_guard lock(mu_);
    return reports_;
}

bool LabelingSession::finished() const {
    std::lock_guard lock(mu_);
    return finished_;
}

std::string record_to_json(const Record& record) {
    json attrs = json::array();
    for (const auto& a : record.attributes) attrs.push_back({{"name", a.name}, {"value", a.value}});
    return json{{"record_id", record.record_id}, {"attributes", attrs}}.dump();
}

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json; charset=utf-8");
}

json status_json(const SessionStatus& s) {
    return {{"iteration", s.iteration},
            {"pending", s.pending},
            {"labeled_this_iteration", s.labeled_this_iteration},
            {"batch_size", s.batch_size},
            {"total_labels", s.total_labels},
            {"last_f1", s.last_f1 ? json(*s.last_f1) : json(nullptr)},
            {"running", s.running},
            {"waiting_for_labels", s.waiting_for_labels},
            {"error", s.error ? json(*s.error) : json(nullptr)}};
}

}  // namespace

void register_routes(httplib::Server& server, LabelingSession& session,
                     const std::optional<std::filesystem::path>& ui_dir) {
    server.Get("/status", [&](const httplib::Request&, httplib::Response& res) {
        send_json(res, status_json(session.status()));
    });

    server.Get("/queue", [&](const httplib::Request& req, httplib::Response& res) {
        std::size_t limit = std::numeric_limits<std::size_t>::max();
        if (req.has_param("limit")) {
            try {
                const long long v = std::stoll(req.get_param_value("limit"));
                if (v < 0) throw std::invalid_argument("negative");
                limit = static_cast<std::size_t>(v);
            } catch (const std::exception&) {
                send_json(res, {{"error", "limit must be a non-negative integer"}}, 400);
                return;
            }
        }
        const auto st = session.status();
        json items = json::array();
        std::size_t position = 0;
        for (const CandidatePair* p : session.queue(limit)) {
            // Only the records themselves: no ground truth, confidence or prediction.
            items.push_back({{"pair_id", p->pair_id},
                             {"position", position++},
                             {"left", json::parse(record_to_json(p->left))},
                             {"right", json::parse(record_to_json(p->right))},
                             {"serialized", serialize_pair(*p)}});
        }
        send_json(res, {{"iteration", st.iteration}, {"items", items}});
    });

    server.Post("/label", [&](const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::parse_error&) {
            send_json(res, {{"error", "body must be JSON"}}, 400);
            return;
        }
        if (!body.is_object() || !body.contains("pair_id") || !body["pair_id"].is_string() ||
            !body.contains("label") || !body["label"].is_number_integer() ||
            (body.contains("annotator_id") && !body["annotator_id"].is_string())) {
            send_json(res, {{"error", "expected {pair_id: string, label: 0|1, annotator_id: string}"}}, 400);
            return;
        }
        const auto raw = body["label"].get<long long>();
        if (raw != 0 && raw != 1) {
            send_json(res, {{"error", "label must be 0 or 1"}}, 400);
            return;
        }
        const auto id = body["pair_id"].get<std::string>();
        const auto annotator = body.value("annotator_id", std::string());
        switch (session.submit(id, raw == 1 ? Label::Match : Label::NonMatch, annotator)) {
            case SubmitOutcome::Accepted: send_json(res, {{"status", "accepted"}, {"pair_id", id}}); break;
            case SubmitOutcome::Duplicate: send_json(res, {{"status", "duplicate"}, {"pair_id", id}}); break;
            case SubmitOutcome::NotPending:
                send_json(res, {{"error", "pair is not in the pending queue"}, {"pair_id", id}}, 409);
                break;
            case SubmitOutcome::Conflict:
                send_json(res, {{"error", "pair already has a different label"}, {"pair_id", id}}, 409);
                break;
        }
    });

    server.Get("/reports", [&](const httplib::Request&, httplib::Response& res) {
        json arr = json::array();
        for (const auto& r : session.reports()) arr.push_back(json::parse(report_to_json(r)));
        send_json(res, arr);
    });

    server.Post("/advance", [&](const httplib::Request&, httplib::Response& res) {
        const bool advanced = session.advance();
        const auto st = session.status();
        send_json(res, {{"advanced", advanced}, {"pending", st.pending}});
    });

    if (ui_dir && !server.set_mount_point("/", ui_dir->string())) {
        throw Error("cannot serve UI directory " + ui_dir->string());
    }
}

}  // namespace battleship
