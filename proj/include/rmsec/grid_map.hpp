#ifndef RMSEC_GRID_MAP_HPP
#define RMSEC_GRID_MAP_HPP

#include <array>
#include <cstdint>
#include <deque>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "rmsec/label.hpp"

namespace rmsec {

enum class Marker : std::uint8_t {
    none,
    start,
    button,
    goal,
    door_slot_1,
    door_slot_2,
    instruction,
    symbol_a,
    symbol_b,
    symbol_c,
    cookie_slot,
};

/// Movement directions in the fixed action order.
enum class Dir : int { up = 0, down = 1, left = 2, right = 3 };
inline constexpr int kNumActions = 4;

inline int dir_dx(Dir d) { return d == Dir::left ? -1 : d == Dir::right ? 1 : 0; }
inline int dir_dy(Dir d) { return d == Dir::up ? -1 : d == Dir::down ? 1 : 0; }

/// Static world geometry: walls, flood-filled room ids and marker cells.
/// Immutable after load_map and safe to share across threads.
struct GridMap {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> wall;  // 1 = wall
    std::vector<int> room;           // room id per cell, -1 for walls
    std::vector<Marker> marker;

    int start = -1;
    int button = -1;
    int goal = -1;
    int instruction = -1;
    std::array<int, 2> door{-1, -1};
    std::array<int, 4> cookie_slot{-1, -1, -1, -1};            // per room
    std::array<std::array<int, 3>, 4> symbol_cell{{{-1, -1, -1},
                                                   {-1, -1, -1},
                                                   {-1, -1, -1},
                                                   {-1, -1, -1}}}; // per room: a, b, c

    int idx(int x, int y) const { return y * width + x; }
    int cx(int idx_) const { return idx_ % width; }
    int cy(int idx_) const { return idx_ / width; }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    bool is_floor(int idx_) const { return wall[static_cast<std::size_t>(idx_)] == 0; }

    /// Neighbor cell in the given direction, or -1 when out of bounds.
    int neighbor(int cell, Dir d) const {
        const int x = cx(cell) + dir_dx(d);
        const int y = cy(cell) + dir_dy(d);
        return in_bounds(x, y) ? idx(x, y) : -1;
    }

    int room_of(int cell) const { return room[static_cast<std::size_t>(cell)]; }
    bool is_door(int cell) const { return cell == door[0] || cell == door[1]; }

    std::vector<int> floor_cells() const {
        std::vector<int> out;
        for (int c = 0; c < width * height; ++c)
            if (is_floor(c)) out.push_back(c);
        return out;
    }
};

/// Parses the ASCII map format. Cell characters: 'X' wall, '.' floor,
/// 'S' start, 'B' button, 'G' goal, 'D' door slot (two, in reading order),
/// 'I' instruction cell, 'a'/'b'/'c' symbol cells, 'o' cookie slot. Lines of
/// the form `#room <id> <x>,<y>` anchor the four rooms; every other line
/// starting with '#' is a comment.
///
/// Room ids are assigned by multi-source BFS from the anchors (nearest anchor
/// wins, ties to the lower room id), so the doorway cells between rooms fall
/// to whichever room is closer. Structural invariants are checked here;
/// domain-specific marker requirements are checked when a domain binds the
/// map.
inline GridMap load_map(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> rows;
    std::array<int, 4> anchor_x{-1, -1, -1, -1};
    std::array<int, 4> anchor_y{-1, -1, -1, -1};
    int lineno = 0;
    auto fail = [&](const std::string& msg) -> void {
        throw ParseError("map parse error at line " + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.rfind("#room", 0) == 0) {
            std::istringstream ls(line.substr(5));
            int id, x, y;
            char comma;
            if (!(ls >> id >> x >> comma >> y) || comma != ',') fail("expected '#room <id> <x>,<y>'");
            if (id < 0 || id > 3) fail("room id must be 0..3");
            if (anchor_x[static_cast<std::size_t>(id)] != -1) fail("duplicate #room anchor");
            anchor_x[static_cast<std::size_t>(id)] = x;
            anchor_y[static_cast<std::size_t>(id)] = y;
            continue;
        }
        if (line.empty() || line[0] == '#') continue;
        rows.push_back(line);
    }
    if (rows.empty()) throw ParseError("map parse error: no grid rows");
    GridMap m;
    m.height = static_cast<int>(rows.size());
    m.width = static_cast<int>(rows[0].size());
    for (std::size_t r = 1; r < rows.size(); ++r)
        if (static_cast<int>(rows[r].size()) != m.width)
            throw ParseError("map parse error: ragged row " + std::to_string(r + 1));
    const int n = m.width * m.height;
    m.wall.assign(static_cast<std::size_t>(n), 0);
    m.room.assign(static_cast<std::size_t>(n), -1);
    m.marker.assign(static_cast<std::size_t>(n), Marker::none);

    int doors_seen = 0;
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            const char ch = rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)];
            const int c = m.idx(x, y);
            Marker mk = Marker::none;
            switch (ch) {
                case 'X': m.wall[static_cast<std::size_t>(c)] = 1; continue;
                case '.': break;
                case 'S':
                    if (m.start != -1) throw ParseError("map invariant violation: more than one start");
                    m.start = c;
                    mk = Marker::start;
                    break;
                case 'B': m.button = c; mk = Marker::button; break;
                case 'G': m.goal = c; mk = Marker::goal; break;
                case 'I': m.instruction = c; mk = Marker::instruction; break;
                case 'D':
                    if (doors_seen >= 2) throw ParseError("map invariant violation: more than two door slots");
                    m.door[static_cast<std::size_t>(doors_seen)] = c;
                    mk = doors_seen == 0 ? Marker::door_slot_1 : Marker::door_slot_2;
                    ++doors_seen;
                    break;
                case 'a': mk = Marker::symbol_a; break;
                case 'b': mk = Marker::symbol_b; break;
                case 'c': mk = Marker::symbol_c; break;
                case 'o': mk = Marker::cookie_slot; break;
                default:
                    throw ParseError(std::string("map parse error: unknown cell character '") + ch + "'");
            }
            m.marker[static_cast<std::size_t>(c)] = mk;
        }
    }
    if (m.start == -1) throw ParseError("map invariant violation: no start");

    // Room assignment: per-anchor BFS distances, nearest anchor wins.
    std::array<std::vector<int>, 4> dist;
    for (int id = 0; id < 4; ++id) {
        if (anchor_x[static_cast<std::size_t>(id)] == -1)
            throw ParseError("map invariant violation: missing #room anchor for room " + std::to_string(id));
        const int ax = anchor_x[static_cast<std::size_t>(id)];
        const int ay = anchor_y[static_cast<std::size_t>(id)];
        if (!m.in_bounds(ax, ay) || !m.is_floor(m.idx(ax, ay)))
            throw ParseError("map invariant violation: room " + std::to_string(id) + " anchor is not a floor cell");
        auto& d = dist[static_cast<std::size_t>(id)];
        d.assign(static_cast<std::size_t>(n), std::numeric_limits<int>::max());
        std::deque<int> queue{m.idx(ax, ay)};
        d[static_cast<std::size_t>(m.idx(ax, ay))] = 0;
        while (!queue.empty()) {
            const int c = queue.front();
            queue.pop_front();
            for (int k = 0; k < kNumActions; ++k) {
                const int nb = m.neighbor(c, static_cast<Dir>(k));
                if (nb < 0 || !m.is_floor(nb)) continue;
                if (d[static_cast<std::size_t>(nb)] != std::numeric_limits<int>::max()) continue;
                d[static_cast<std::size_t>(nb)] = d[static_cast<std::size_t>(c)] + 1;
                queue.push_back(nb);
            }
        }
    }
    for (int c = 0; c < n; ++c) {
        if (!m.is_floor(c)) continue;
        int best = -1;
        int best_d = std::numeric_limits<int>::max();
        for (int id = 0; id < 4; ++id) {
            const int d = dist[static_cast<std::size_t>(id)][static_cast<std::size_t>(c)];
            if (d < best_d) {
                best_d = d;
                best = id;
            }
        }
        if (best == -1) throw ParseError("map invariant violation: floor cell unreachable from any anchor");
        m.room[static_cast<std::size_t>(c)] = best;
    }

    if (m.room_of(m.start) != 1)
        throw ParseError("map invariant violation: start is not in room 1");

    // Doorway structure: rooms 0, 2 and 3 each touch room 1 through exactly
    // one floor adjacency, and never touch each other.
    std::array<std::array<int, 4>, 4> adj{};
    for (int c = 0; c < n; ++c) {
        if (!m.is_floor(c)) continue;
        for (Dir d : {Dir::right, Dir::down}) {
            const int nb = m.neighbor(c, d);
            if (nb < 0 || !m.is_floor(nb)) continue;
            const int r1 = m.room_of(c);
            const int r2 = m.room_of(nb);
            if (r1 != r2) {
                ++adj[static_cast<std::size_t>(r1)][static_cast<std::size_t>(r2)];
                ++adj[static_cast<std::size_t>(r2)][static_cast<std::size_t>(r1)];
            }
        }
    }
    for (int r : {0, 2, 3})
        if (adj[static_cast<std::size_t>(r)][1] != 1)
            throw ParseError("map invariant violation: room " + std::to_string(r) +
                             " must connect to room 1 through exactly one doorway");
    for (auto [a, b] : {std::pair{0, 2}, std::pair{0, 3}, std::pair{2, 3}})
        if (adj[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] != 0)
            throw ParseError("map invariant violation: rooms " + std::to_string(a) + " and " +
                             std::to_string(b) + " must not touch");

    if (doors_seen == 2) {
        // The corridor into room 3 holds the two door slots in order: slot 1
        // on the hallway side, slot 2 adjacent to it.
        if (m.room_of(m.door[0]) != 3 || m.room_of(m.door[1]) != 3)
            throw ParseError("map invariant violation: door slots must lie in the room 3 corridor");
        bool adjacent = false;
        for (int k = 0; k < kNumActions; ++k)
            adjacent |= m.neighbor(m.door[0], static_cast<Dir>(k)) == m.door[1];
        if (!adjacent)
            throw ParseError("map invariant violation: door slots must be adjacent");
    } else if (doors_seen != 0) {
        throw ParseError("map invariant violation: expected zero or two door slots");
    }

    for (int c = 0; c < n; ++c) {
        const Marker mk = m.marker[static_cast<std::size_t>(c)];
        const int r = m.is_floor(c) ? m.room_of(c) : -1;
        if (mk == Marker::cookie_slot) {
            if (r != 0 && r != 2) throw ParseError("map invariant violation: cookie slot outside rooms 0/2");
            if (m.cookie_slot[static_cast<std::size_t>(r)] != -1)
                throw ParseError("map invariant violation: duplicate cookie slot in room " + std::to_string(r));
            m.cookie_slot[static_cast<std::size_t>(r)] = c;
        } else if (mk == Marker::symbol_a || mk == Marker::symbol_b || mk == Marker::symbol_c) {
            if (r != 0 && r != 2) throw ParseError("map invariant violation: symbol cell outside rooms 0/2");
            const int s = mk == Marker::symbol_a ? 0 : mk == Marker::symbol_b ? 1 : 2;
            if (m.symbol_cell[static_cast<std::size_t>(r)][static_cast<std::size_t>(s)] != -1)
                throw ParseError("map invariant violation: duplicate symbol cell in room " + std::to_string(r));
            m.symbol_cell[static_cast<std::size_t>(r)][static_cast<std::size_t>(s)] = c;
        }
    }
    return m;
}

} // namespace rmsec

#endif
