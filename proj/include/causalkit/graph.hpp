#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace causalkit {

struct Edge {
    std::string from;
    std::string to;

    friend bool operator==(const Edge&, const Edge&) = default;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

// True iff the directed graph given by `edges` over node indices has no cycle.
// Kahn's algorithm.
inline bool is_acyclic(std::size_t n_nodes, const std::vector<std::pair<int, int>>& edges) {
    std::vector<std::vector<int>> children(n_nodes);
    std::vector<int> in_degree(n_nodes, 0);
    for (const auto& [u, v] : edges) {
        children[static_cast<std::size_t>(u)].push_back(v);
        ++in_degree[static_cast<std::size_t>(v)];
    }
    std::vector<int> stack;
    for (std::size_t i = 0; i < n_nodes; ++i)
        if (in_degree[i] == 0) stack.push_back(static_cast<int>(i));
    std::size_t removed = 0;
    while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        ++removed;
        for (int v : children[static_cast<std::size_t>(u)])
            if (--in_degree[static_cast<std::size_t>(v)] == 0) stack.push_back(v);
    }
    return removed == n_nodes;
}

// Directed acyclic graph over named nodes. Acyclicity is a construction
// invariant: any mutation that would close a cycle throws.
class Dag {
public:
    explicit Dag(std::vector<std::string> nodes) : nodes_(std::move(nodes)) {
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (nodes_[i].empty())
                throw std::invalid_argument("Dag: empty node name");
            if (!index_.emplace(nodes_[i], static_cast<int>(i)).second)
                throw std::invalid_argument("Dag: duplicate node '" + nodes_[i] + "'");
        }
        parents_.resize(nodes_.size());
        children_.resize(nodes_.size());
    }

    Dag(std::vector<std::string> nodes, const std::vector<Edge>& edges) : Dag(std::move(nodes)) {
        for (const Edge& e : edges) add_edge(e.from, e.to);
    }

    const std::vector<std::string>& nodes() const { return nodes_; }
    std::size_t n_nodes() const { return nodes_.size(); }
    bool has_node(const std::string& name) const { return index_.count(name) > 0; }

    int node_index(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end())
            throw std::invalid_argument("Dag: unknown node '" + name + "'");
        return it->second;
    }

    bool has_edge(const std::string& from, const std::string& to) const {
        const int u = node_index(from);
        const int v = node_index(to);
        const auto& ch = children_[static_cast<std::size_t>(u)];
        return std::find(ch.begin(), ch.end(), v) != ch.end();
    }

    void add_edge(const std::string& from, const std::string& to) {
        const int u = node_index(from);
        const int v = node_index(to);
        if (u == v) throw std::invalid_argument("Dag: self-loop on '" + from + "'");
        if (has_edge(from, to))
            throw std::invalid_argument("Dag: duplicate edge " + from + " -> " + to);
        if (reaches(v, u))
            throw std::invalid_argument("Dag: edge " + from + " -> " + to + " closes a cycle");
        children_[static_cast<std::size_t>(u)].push_back(v);
        parents_[static_cast<std::size_t>(v)].push_back(u);
        ++n_edges_;
    }

    void remove_edge(const std::string& from, const std::string& to) {
        const int u = node_index(from);
        const int v = node_index(to);
        auto& ch = children_[static_cast<std::size_t>(u)];
        auto it = std::find(ch.begin(), ch.end(), v);
        if (it == ch.end())
            throw std::invalid_argument("Dag: no edge " + from + " -> " + to);
        ch.erase(it);
        auto& pa = parents_[static_cast<std::size_t>(v)];
        pa.erase(std::find(pa.begin(), pa.end(), u));
        --n_edges_;
    }

    std::size_t n_edges() const { return n_edges_; }

    // All edges, sorted lexicographically by (from, to).
    std::vector<Edge> edges() const {
        std::vector<Edge> out;
        out.reserve(n_edges_);
        for (std::size_t u = 0; u < nodes_.size(); ++u)
            for (int v : children_[u]) out.push_back({nodes_[u], nodes_[static_cast<std::size_t>(v)]});
        std::sort(out.begin(), out.end());
        return out;
    }

    std::vector<std::string> parents(const std::string& node) const {
        return names_of(parents_[static_cast<std::size_t>(node_index(node))]);
    }
    std::vector<std::string> children(const std::string& node) const {
        return names_of(children_[static_cast<std::size_t>(node_index(node))]);
    }

    const std::vector<int>& parent_indices(int node) const {
        return parents_[static_cast<std::size_t>(node)];
    }
    const std::vector<int>& child_indices(int node) const {
        return children_[static_cast<std::size_t>(node)];
    }

    // True iff a directed path from -> to exists (including the empty path
    // when from == to).
    bool has_directed_path(const std::string& from, const std::string& to) const {
        return reaches(node_index(from), node_index(to));
    }

    std::set<std::string> descendants(const std::string& node) const {
        std::set<std::string> out;
        std::vector<int> stack = {node_index(node)};
        std::vector<bool> seen(nodes_.size(), false);
        seen[static_cast<std::size_t>(stack.back())] = true;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int v : children_[static_cast<std::size_t>(u)]) {
                if (!seen[static_cast<std::size_t>(v)]) {
                    seen[static_cast<std::size_t>(v)] = true;
                    out.insert(nodes_[static_cast<std::size_t>(v)]);
                    stack.push_back(v);
                }
            }
        }
        return out;
    }

    std::vector<std::string> topological_order() const {
        std::vector<int> in_degree(nodes_.size(), 0);
        for (std::size_t v = 0; v < nodes_.size(); ++v)
            in_degree[v] = static_cast<int>(parents_[v].size());
        std::vector<int> stack;
        for (std::size_t i = nodes_.size(); i > 0; --i)
            if (in_degree[i - 1] == 0) stack.push_back(static_cast<int>(i - 1));
        std::vector<std::string> order;
        order.reserve(nodes_.size());
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            order.push_back(nodes_[static_cast<std::size_t>(u)]);
            for (int v : children_[static_cast<std::size_t>(u)])
                if (--in_degree[static_cast<std::size_t>(v)] == 0) stack.push_back(v);
        }
        return order;
    }

    // Copy of this graph with all edges leaving `node` removed; the graph in
    // which backdoor paths are the only remaining x-y connections.
    Dag without_outgoing(const std::string& node) const {
        Dag g(nodes_);
        for (const Edge& e : edges())
            if (e.from != node) g.add_edge(e.from, e.to);
        return g;
    }

private:
    std::vector<std::string> names_of(const std::vector<int>& idx) const {
        std::vector<int> sorted = idx;
        std::sort(sorted.begin(), sorted.end());
        std::vector<std::string> out;
        out.reserve(sorted.size());
        for (int i : sorted) out.push_back(nodes_[static_cast<std::size_t>(i)]);
        return out;
    }

    bool reaches(int from, int to) const {
        if (from == to) return true;
        std::vector<bool> seen(nodes_.size(), false);
        std::vector<int> stack = {from};
        seen[static_cast<std::size_t>(from)] = true;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int v : children_[static_cast<std::size_t>(u)]) {
                if (v == to) return true;
                if (!seen[static_cast<std::size_t>(v)]) {
                    seen[static_cast<std::size_t>(v)] = true;
                    stack.push_back(v);
                }
            }
        }
        return false;
    }

    std::vector<std::string> nodes_;
    std::map<std::string, int> index_;
    std::vector<std::vector<int>> parents_;
    std::vector<std::vector<int>> children_;
    std::size_t n_edges_ = 0;
};

// An undirected simple path with per-step edge orientation: forward[i] is
// true when the graph edge runs nodes[i] -> nodes[i+1].
struct Path {
    std::vector<std::string> nodes;
    std::vector<bool> forward;
};

// All simple paths between x and y ignoring edge direction. Exponential in
// the worst case; meant for small graphs and test oracles.
inline std::vector<Path> undirected_paths(const Dag& g, const std::string& x,
                                          const std::string& y) {
    const int start = g.node_index(x);
    const int goal = g.node_index(y);
    if (start == goal) throw std::invalid_argument("undirected_paths: x == y");

    std::vector<Path> out;
    std::vector<int> path_nodes = {start};
    std::vector<bool> path_forward;
    std::vector<bool> on_path(g.n_nodes(), false);
    on_path[static_cast<std::size_t>(start)] = true;

    auto emit = [&] {
        Path p;
        for (int i : path_nodes) p.nodes.push_back(g.nodes()[static_cast<std::size_t>(i)]);
        p.forward = path_forward;
        out.push_back(std::move(p));
    };

    // Neighbor steps sorted by (node index, direction) for a stable output order.
    auto dfs = [&](auto&& self, int u) -> void {
        std::vector<std::pair<int, bool>> steps;
        for (int v : g.child_indices(u)) steps.emplace_back(v, true);
        for (int v : g.parent_indices(u)) steps.emplace_back(v, false);
        std::sort(steps.begin(), steps.end());
        for (const auto& [v, fwd] : steps) {
            if (on_path[static_cast<std::size_t>(v)]) continue;
            path_nodes.push_back(v);
            path_forward.push_back(fwd);
            if (v == goal) {
                emit();
            } else {
                on_path[static_cast<std::size_t>(v)] = true;
                self(self, v);
                on_path[static_cast<std::size_t>(v)] = false;
            }
            path_nodes.pop_back();
            path_forward.pop_back();
        }
    };
    dfs(dfs, start);
    return out;
}

// d-separation of x and y given z, by linear-time reachability over
// (node, entry direction) states. A collider admits the trail only when it
// or one of its descendants is conditioned on.
inline bool d_separated(const Dag& g, const std::string& x, const std::string& y,
                        const std::set<std::string>& z) {
    if (x == y) throw std::invalid_argument("d_separated: x == y");
    if (z.count(x) || z.count(y))
        throw std::invalid_argument("d_separated: x and y must not be conditioned on");
    const int src = g.node_index(x);
    const int dst = g.node_index(y);

    std::vector<bool> in_z(g.n_nodes(), false);
    for (const auto& name : z) in_z[static_cast<std::size_t>(g.node_index(name))] = true;

    // Ancestors of z (inclusive): the nodes at which a collider is open.
    std::vector<bool> anc_z(g.n_nodes(), false);
    {
        std::vector<int> stack;
        for (std::size_t i = 0; i < g.n_nodes(); ++i)
            if (in_z[i]) {
                anc_z[i] = true;
                stack.push_back(static_cast<int>(i));
            }
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int p : g.parent_indices(u))
                if (!anc_z[static_cast<std::size_t>(p)]) {
                    anc_z[static_cast<std::size_t>(p)] = true;
                    stack.push_back(p);
                }
        }
    }

    constexpr int kFromChild = 0;  // trail entered the node against an edge
    constexpr int kFromParent = 1; // trail entered the node along an edge
    std::vector<std::array<bool, 2>> visited(g.n_nodes(), {false, false});
    std::deque<std::pair<int, int>> queue;
    queue.emplace_back(src, kFromChild);

    while (!queue.empty()) {
        const auto [u, dir] = queue.front();
        queue.pop_front();
        auto& flags = visited[static_cast<std::size_t>(u)];
        if (flags[static_cast<std::size_t>(dir)]) continue;
        flags[static_cast<std::size_t>(dir)] = true;

        if (u == dst) return false;  // active trail reached y

        if (dir == kFromChild) {
            if (!in_z[static_cast<std::size_t>(u)]) {
                for (int p : g.parent_indices(u)) queue.emplace_back(p, kFromChild);
                for (int c : g.child_indices(u)) queue.emplace_back(c, kFromParent);
            }
        } else {
            if (!in_z[static_cast<std::size_t>(u)])
                for (int c : g.child_indices(u)) queue.emplace_back(c, kFromParent);
            if (anc_z[static_cast<std::size_t>(u)])
                for (int p : g.parent_indices(u)) queue.emplace_back(p, kFromChild);
        }
    }
    return true;
}

// Domain knowledge: edges the learned graph must contain and edges it must
// not. Construction rejects contradictions and cyclic enforce sets.
class ConstraintSet {
public:
    ConstraintSet() = default;

    ConstraintSet(std::set<Edge> enforce, std::set<Edge> forbid)
        : enforce_(std::move(enforce)), forbid_(std::move(forbid)) {
        for (const Edge& e : enforce_) {
            if (e.from == e.to)
                throw std::invalid_argument("ConstraintSet: self-loop enforced on '" + e.from + "'");
            if (forbid_.count(e))
                throw std::invalid_argument("ConstraintSet: edge " + e.from + " -> " + e.to +
                                            " both enforced and forbidden");
        }
        std::map<std::string, int> idx;
        auto id = [&](const std::string& n) {
            return idx.emplace(n, static_cast<int>(idx.size())).first->second;
        };
        std::vector<std::pair<int, int>> edges;
        for (const Edge& e : enforce_) edges.emplace_back(id(e.from), id(e.to));
        if (!is_acyclic(idx.size(), edges))
            throw std::invalid_argument("ConstraintSet: enforced edges contain a cycle");
    }

    const std::set<Edge>& enforce() const { return enforce_; }
    const std::set<Edge>& forbid() const { return forbid_; }
    bool enforces(const std::string& from, const std::string& to) const {
        return enforce_.count({from, to}) > 0;
    }
    bool forbids(const std::string& from, const std::string& to) const {
        return forbid_.count({from, to}) > 0;
    }

    // All constrained node names.
    std::set<std::string> referenced_nodes() const {
        std::set<std::string> out;
        for (const Edge& e : enforce_) { out.insert(e.from); out.insert(e.to); }
        for (const Edge& e : forbid_) { out.insert(e.from); out.insert(e.to); }
        return out;
    }

    // Merge where `overrides` wins: its enforce entries delete matching base
    // forbids and vice versa. Contradictions inside one side still throw.
    static ConstraintSet merged(const ConstraintSet& base, const ConstraintSet& overrides) {
        std::set<Edge> enforce = base.enforce();
        std::set<Edge> forbid = base.forbid();
        for (const Edge& e : overrides.enforce()) forbid.erase(e);
        for (const Edge& e : overrides.forbid()) enforce.erase(e);
        enforce.insert(overrides.enforce().begin(), overrides.enforce().end());
        forbid.insert(overrides.forbid().begin(), overrides.forbid().end());
        return ConstraintSet(std::move(enforce), std::move(forbid));
    }

private:
    std::set<Edge> enforce_;
    std::set<Edge> forbid_;
};

struct ConstraintViolation {
    enum class Kind { MissingEnforced, ForbiddenPresent };
    Kind kind;
    Edge edge;

    std::string describe() const {
        return kind == Kind::MissingEnforced
                   ? "missing enforced edge " + edge.from + " -> " + edge.to
                   : "forbidden edge " + edge.from + " -> " + edge.to + " present";
    }
};

struct ConstraintCheck {
    bool ok = true;
    std::vector<ConstraintViolation> violations;
};

inline ConstraintCheck check_constraints(const Dag& g, const ConstraintSet& c) {
    ConstraintCheck result;
    for (const Edge& e : c.enforce())
        if (!g.has_node(e.from) || !g.has_node(e.to) || !g.has_edge(e.from, e.to))
            result.violations.push_back({ConstraintViolation::Kind::MissingEnforced, e});
    for (const Edge& e : c.forbid())
        if (g.has_node(e.from) && g.has_node(e.to) && g.has_edge(e.from, e.to))
            result.violations.push_back({ConstraintViolation::Kind::ForbiddenPresent, e});
    result.ok = result.violations.empty();
    return result;
}

// Expand the built-in domain rules over a variable set:
//  - hyper-parameter roots receive no edges,
//  - the attack node emits no edges,
//  - train/test variance receive only from roots,
//  - train/test bias receive only from roots and their loss/variance parents,
//  - gap variables are forced onto their defining inputs,
//  - centroid distance does not drive test loss/accuracy, nor test variance
//    the test loss.
// Rules naming columns absent from `variables` are skipped.
inline ConstraintSet builtin_constraints(const std::vector<std::string>& variables,
                                         const std::string& attack,
                                         const std::vector<std::string>& roots) {
    const std::set<std::string> vars(variables.begin(), variables.end());
    auto require_known = [&](const std::string& name, const char* what) {
        if (!vars.count(name))
            throw std::invalid_argument(std::string("builtin_constraints: ") + what + " '" +
                                        name + "' is not a variable");
    };
    if (!attack.empty()) require_known(attack, "attack node");
    for (const auto& r : roots) require_known(r, "root node");
    const std::set<std::string> root_set(roots.begin(), roots.end());

    std::set<Edge> enforce;
    std::set<Edge> forbid;

    for (const auto& r : roots)
        for (const auto& v : variables)
            if (v != r) forbid.insert({v, r});

    if (!attack.empty())
        for (const auto& v : variables)
            if (v != attack) forbid.insert({attack, v});

    auto restrict_incoming = [&](const std::string& node, const std::set<std::string>& allowed) {
        if (!vars.count(node)) return;
        for (const auto& v : variables)
            if (v != node && !root_set.count(v) && !allowed.count(v)) forbid.insert({v, node});
    };
    restrict_incoming("TrainVar", {});
    restrict_incoming("TestVar", {});
    restrict_incoming("TrainBias", {"TrainLoss", "TrainVar"});
    restrict_incoming("TestBias", {"TestLoss", "TestVar"});

    auto enforce_if_present = [&](const std::string& from, const std::string& to) {
        if (vars.count(from) && vars.count(to)) enforce.insert({from, to});
    };
    enforce_if_present("TrainAcc", "AccDiff");
    enforce_if_present("TestAcc", "AccDiff");
    enforce_if_present("TrainLoss", "LossDiff");
    enforce_if_present("TestLoss", "LossDiff");

    auto forbid_if_present = [&](const std::string& from, const std::string& to) {
        if (vars.count(from) && vars.count(to)) forbid.insert({from, to});
    };
    forbid_if_present("CentroidDist", "TestLoss");
    forbid_if_present("CentroidDist", "TestAcc");
    forbid_if_present("TestVar", "TestLoss");

    for (const Edge& e : enforce) forbid.erase(e);
    return ConstraintSet(std::move(enforce), std::move(forbid));
}

// Constraint file: one `forbid A -> B` or `enforce A -> B` per line,
// `#` comments, blank lines ignored.
inline ConstraintSet parse_constraints(std::istream& in, const std::string& origin = "<stream>") {
    std::set<Edge> enforce;
    std::set<Edge> forbid;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string keyword, from, arrow, to;
        if (!(ss >> keyword)) continue;
        std::string extra;
        if (!(ss >> from >> arrow >> to) || arrow != "->" || (ss >> extra))
            throw std::runtime_error("constraints: " + origin + ": line " +
                                     std::to_string(line_no) +
                                     ": expected '<enforce|forbid> A -> B'");
        if (keyword == "enforce") {
            enforce.insert({from, to});
        } else if (keyword == "forbid") {
            forbid.insert({from, to});
        } else {
            throw std::runtime_error("constraints: " + origin + ": line " +
                                     std::to_string(line_no) + ": unknown keyword '" +
                                     keyword + "'");
        }
    }
    return ConstraintSet(std::move(enforce), std::move(forbid));
}

inline ConstraintSet load_constraints(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("constraints: cannot open '" + path + "'");
    return parse_constraints(in, path);
}

// DOT export: every node on its own line, then one `a -> b;` per edge.
inline std::string to_dot(const Dag& g, const std::string& name = "G") {
    std::ostringstream out;
    out << "digraph " << name << " {\n";
    for (const auto& n : g.nodes()) out << "  " << n << ";\n";
    for (const Edge& e : g.edges()) out << "  " << e.from << " -> " << e.to << ";\n";
    out << "}\n";
    return out.str();
}

inline void save_dot(const Dag& g, const std::string& path, const std::string& name = "G") {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_dot: cannot open '" + path + "'");
    out << to_dot(g, name);
}

// Parse the digraph subset this library emits: node statements `a;` and edge
// statements `a -> b;`, optionally quoted names, `//` or `#` comments.
inline Dag parse_dot(const std::string& text, const std::string& origin = "<string>") {
    std::string cleaned;
    cleaned.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '#' || (text[i] == '/' && i + 1 < text.size() && text[i + 1] == '/')) {
            while (i < text.size() && text[i] != '\n') ++i;
            if (i < text.size()) cleaned.push_back('\n');
            continue;
        }
        cleaned.push_back(text[i]);
    }

    auto fail = [&](const std::string& msg) -> void {
        throw std::runtime_error("parse_dot: " + origin + ": " + msg);
    };

    std::size_t pos = 0;
    auto skip_ws = [&] { while (pos < cleaned.size() && std::isspace(static_cast<unsigned char>(cleaned[pos]))) ++pos; };
    auto token = [&]() -> std::string {
        skip_ws();
        if (pos >= cleaned.size()) return "";
        const char c = cleaned[pos];
        if (c == '{' || c == '}' || c == ';') { ++pos; return std::string(1, c); }
        if (c == '-' && pos + 1 < cleaned.size() && cleaned[pos + 1] == '>') { pos += 2; return "->"; }
        if (c == '"') {
            std::size_t end = cleaned.find('"', pos + 1);
            if (end == std::string::npos) fail("unterminated quote");
            std::string t = cleaned.substr(pos + 1, end - pos - 1);
            pos = end + 1;
            return t;
        }
        std::size_t start = pos;
        while (pos < cleaned.size() && !std::isspace(static_cast<unsigned char>(cleaned[pos])) &&
               cleaned[pos] != ';' && cleaned[pos] != '{' && cleaned[pos] != '}' &&
               !(cleaned[pos] == '-' && pos + 1 < cleaned.size() && cleaned[pos + 1] == '>'))
            ++pos;
        return cleaned.substr(start, pos - start);
    };

    std::string t = token();
    if (t != "digraph") fail("expected 'digraph'");
    t = token();
    if (t != "{") t = token();  // optional graph name
    if (t != "{") fail("expected '{'");

    std::vector<std::string> nodes;
    std::set<std::string> node_set;
    std::vector<Edge> edges;
    auto note_node = [&](const std::string& n) {
        if (node_set.insert(n).second) nodes.push_back(n);
    };

    for (;;) {
        std::string a = token();
        if (a.empty()) fail("unexpected end of input");
        if (a == "}") break;
        if (a == ";") continue;
        std::string next = token();
        if (next == "->") {
            std::string b = token();
            if (b.empty() || b == ";" || b == "}") fail("dangling edge from '" + a + "'");
            note_node(a);
            note_node(b);
            edges.push_back({a, b});
            next = token();
            if (next == "}") break;
            if (next != ";") fail("expected ';' after edge");
        } else if (next == ";") {
            note_node(a);
        } else if (next == "}") {
            note_node(a);
            break;
        } else {
            fail("unexpected token '" + next + "'");
        }
    }

    std::vector<Edge> unique_edges;
    for (const Edge& e : edges)
        if (std::find(unique_edges.begin(), unique_edges.end(), e) == unique_edges.end())
            unique_edges.push_back(e);
    return Dag(nodes, unique_edges);
}

inline Dag load_dot(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dot: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_dot(ss.str(), path);
}

}  // namespace causalkit
