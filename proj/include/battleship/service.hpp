#pragma once

#include <condition_variable>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "battleship/selector.hpp"

namespace httplib {
class Server;
}

namespace battleship {

struct SessionStatus {
    std::size_t iteration = 0;
    std::size_t pending = 0;
    std::size_t labeled_this_iteration = 0;
    std::size_t batch_size = 0;
    std::size_t total_labels = 0;
    std::optional<double> last_f1;
    bool running = false;
    bool waiting_for_labels = false;
    std::optional<std::string> error;
};

enum class SubmitOutcome { Accepted, Duplicate, NotPending, Conflict };

class SessionCancelled : public Error {
public:
    using Error::Error;
};

/// A live labeling session: the active-learning loop runs on its own thread
/// and, at each labeling step, publishes its batch and blocks until every
/// pair has a label and the annotator asks to advance. Labels are appended
/// to the journal as they arrive; a restarted session replays the same
/// selections and reuses journaled labels.
class LabelingSession : public LabelSource {
public:
    LabelingSession(const DatasetSplit& data, LoopConfig config, const std::filesystem::path& journal);
    ~LabelingSession() override;

    LabelingSession(const LabelingSession&) = delete;
    LabelingSession& operator=(const LabelingSession&) = delete;

    void start();
    void stop();
    void join();

    std::vector<Label> label(std::span<const PairId> ids, std::size_t iteration) override;
    std::size_t calls() const override;

    SessionStatus status() const;
    /// Unlabeled pairs of the current batch, in selection order.
    std::vector<const CandidatePair*> queue(std::size_t limit) const;
    SubmitOutcome submit(const PairId& id, Label label, const std::string& annotator);
    /// Resumes the loop when the whole batch is labeled; otherwise a no-op.
    bool advance();
    std::vector<IterationReport> reports() const;
    bool finished() const;

private:
    std::size_t pending_locked() const;

    const DatasetSplit& data_;
    LoopConfig config_;
    std::unordered_map<PairId, const CandidatePair*> pairs_;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    LabelStore store_;
    std::vector<PairId> batch_;
    std::size_t iteration_ = 0;
    bool waiting_ = false;
    bool advance_requested_ = false;
    bool stopping_ = false;
    bool running_ = false;
    bool finished_ = false;
    std::size_t calls_ = 0;
    std::optional<double> last_f1_;
    std::vector<IterationReport> reports_;
    std::optional<std::string> error_;
    std::thread thread_;
};

/// Installs GET /status, GET /queue, POST /label, GET /reports and
/// POST /advance. When `ui_dir` is set its files are served under /.
void register_routes(httplib::Server& server, LabelingSession& session,
                     const std::optional<std::filesystem::path>& ui_dir = std::nullopt);

std::string record_to_json(const Record& record);

}  // namespace battleship
