//! The Tangle DAG: vertices, approval edges, cones, cumulative weights and
//! time-delayed views.
//!
//! Vertex ids are dense indices assigned in attachment order, and attachment
//! timestamps are strictly increasing. A view at cutoff time `c` is therefore
//! always a prefix `[0, len)` of the vertex sequence, and the approvers of any
//! vertex that are visible in the view form a prefix of its approver list.

use std::borrow::Cow;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

/// Dense vertex index. The genesis is always `VertexId(0)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub u32);

impl VertexId {
    pub const GENESIS: VertexId = VertexId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Identity shared by every (re)issue of one logical transaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LogicalId(pub u32);

impl LogicalId {
    /// Reserved for the genesis vertex.
    pub const GENESIS: LogicalId = LogicalId(u32::MAX);
}

impl fmt::Display for LogicalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tx{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    pub id: VertexId,
    pub timestamp: f64,
    /// The two approved vertices; `None` only for the genesis.
    pub approves: Option<[VertexId; 2]>,
    pub issuer: u32,
    pub logical_id: LogicalId,
    pub reissue_index: u32,
}

impl Vertex {
    #[inline]
    pub fn parents(&self) -> &[VertexId] {
        match &self.approves {
            Some(p) => p,
            None => &[],
        }
    }
}

/// Append-only timestamped DAG.
#[derive(Debug)]
pub struct Tangle {
    /// Process-unique identity, fresh for every tangle and every clone, so
    /// caches keyed on vertex ids can tell tangles apart.
    uid: u64,
    vertices: Vec<Vertex>,
    approvers: Vec<Vec<VertexId>>,
    logical_index: HashMap<LogicalId, Vec<VertexId>>,
    multi_issue: Vec<LogicalId>,
}

static NEXT_UID: AtomicU64 = AtomicU64::new(0);

fn next_uid() -> u64 {
    NEXT_UID.fetch_add(1, Ordering::Relaxed)
}

impl Clone for Tangle {
    fn clone(&self) -> Self {
        Tangle {
            uid: next_uid(),
            vertices: self.vertices.clone(),
            approvers: self.approvers.clone(),
            logical_index: self.logical_index.clone(),
            multi_issue: self.multi_issue.clone(),
        }
    }
}

impl Default for Tangle {
    fn default() -> Self {
        Self::new()
    }
}

impl Tangle {
    /// A tangle holding only the genesis, stamped at time 0.
    pub fn new() -> Self {
        let genesis = Vertex {
            id: VertexId::GENESIS,
            timestamp: 0.0,
            approves: None,
            issuer: u32::MAX,
            logical_id: LogicalId::GENESIS,
            reissue_index: 0,
        };
        let mut logical_index = HashMap::new();
        logical_index.insert(LogicalId::GENESIS, vec![VertexId::GENESIS]);
        Tangle {
            uid: next_uid(),
            vertices: vec![genesis],
            approvers: vec![Vec::new()],
            logical_index,
            multi_issue: Vec::new(),
        }
    }

    /// Appends a vertex approving `parents`. A repeated parent yields a
    /// multiplicity-2 edge.
    pub fn attach(
        &mut self,
        parents: (VertexId, VertexId),
        timestamp: f64,
        issuer: u32,
        logical_id: LogicalId,
    ) -> Result<VertexId> {
        let n = self.vertices.len();
        for p in [parents.0, parents.1] {
            if p.index() >= n {
                return Err(Error::UnknownVertex(p));
            }
        }
        let newest = self.newest_timestamp();
        if !(timestamp > newest) {
            return Err(Error::NonIncreasingTimestamp { timestamp, newest });
        }
        let id = VertexId(u32::try_from(n).expect("tangle exceeds u32 vertex ids"));
        let issues = self.logical_index.entry(logical_id).or_default();
        let reissue_index = issues.len() as u32;
        issues.push(id);
        if issues.len() == 2 {
            self.multi_issue.push(logical_id);
        }
        self.vertices.push(Vertex {
            id,
            timestamp,
            approves: Some([parents.0, parents.1]),
            issuer,
            logical_id,
            reissue_index,
        });
        self.approvers.push(Vec::new());
        self.approvers[parents.0.index()].push(id);
        self.approvers[parents.1.index()].push(id);
        Ok(id)
    }

    #[inline]
    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    /// Never true: the genesis is always present.
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn vertex(&self, id: VertexId) -> Option<&Vertex> {
        self.vertices.get(id.index())
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    #[inline]
    pub fn timestamp(&self, id: VertexId) -> f64 {
        self.vertices[id.index()].timestamp
    }

    pub fn newest_timestamp(&self) -> f64 {
        self.vertices.last().map_or(0.0, |v| v.timestamp)
    }

    /// Every approver of `id` in the live tangle, ascending, with multiplicity.
    #[inline]
    pub fn approvers(&self, id: VertexId) -> &[VertexId] {
        &self.approvers[id.index()]
    }

    #[inline]
    pub fn parents(&self, id: VertexId) -> &[VertexId] {
        self.vertices[id.index()].parents()
    }

    /// All issues of a logical transaction, oldest first.
    pub fn issues(&self, logical: LogicalId) -> &[VertexId] {
        self.logical_index.get(&logical).map_or(&[], Vec::as_slice)
    }

    /// Logical transactions with more than one issue, in the order they were
    /// first reissued.
    pub fn reissued_logicals(&self) -> &[LogicalId] {
        &self.multi_issue
    }

    /// Tips of the live tangle.
    pub fn live_tip_count(&self) -> usize {
        self.approvers.iter().filter(|a| a.is_empty()).count()
    }

    /// Number of vertices with `timestamp <= cutoff` (at least the genesis).
    pub fn prefix_len(&self, cutoff: f64) -> usize {
        self.vertices.partition_point(|v| v.timestamp <= cutoff).max(1)
    }
}

/// Reusable scratch space for cone traversals.
#[derive(Clone, Debug, Default)]
pub struct ConeMarker {
    stamp: Vec<u32>,
    epoch: u32,
    stack: Vec<VertexId>,
}

impl ConeMarker {
    pub fn new() -> Self {
        Self::default()
    }

    fn begin(&mut self, n: usize) {
        if self.stamp.len() < n {
            self.stamp.resize(n, 0);
        }
        if self.epoch == u32::MAX {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 0;
        }
        self.epoch += 1;
        self.stack.clear();
    }

    #[inline]
    pub fn is_marked(&self, v: VertexId) -> bool {
        self.stamp.get(v.index()) == Some(&self.epoch)
    }

    /// Marks `roots` and everything they reference with id `>= floor`.
    pub fn mark_past(&mut self, tangle: &Tangle, roots: &[VertexId], floor: VertexId) {
        self.begin(tangle.len());
        for &r in roots {
            if r >= floor && self.stamp[r.index()] != self.epoch {
                self.stamp[r.index()] = self.epoch;
                self.stack.push(r);
            }
        }
        while let Some(x) = self.stack.pop() {
            for &p in tangle.parents(x) {
                if p >= floor && self.stamp[p.index()] != self.epoch {
                    self.stamp[p.index()] = self.epoch;
                    self.stack.push(p);
                }
            }
        }
    }

    /// Marks `root` and every vertex below `limit` that references it.
    /// Stops early and returns true as soon as a vertex in `targets` is marked.
    pub fn mark_future_until(
        &mut self,
        tangle: &Tangle,
        root: VertexId,
        limit: usize,
        targets: &[VertexId],
    ) -> bool {
        self.begin(tangle.len());
        self.stamp[root.index()] = self.epoch;
        self.stack.push(root);
        if targets.contains(&root) {
            return true;
        }
        while let Some(x) = self.stack.pop() {
            for &z in tangle.approvers(x) {
                if z.index() >= limit {
                    break;
                }
                if self.stamp[z.index()] != self.epoch {
                    if targets.contains(&z) {
                        return true;
                    }
                    self.stamp[z.index()] = self.epoch;
                    self.stack.push(z);
                }
            }
        }
        false
    }
}

/// Reusable scratch space for splitting the reflexive past cones of two
/// vertices into their exclusive parts.
#[derive(Clone, Debug, Default)]
pub struct ConeDiff {
    side: Vec<u8>,
    touched: Vec<VertexId>,
    heap: BinaryHeap<VertexId>,
    only: [Vec<VertexId>; 2],
}

impl ConeDiff {
    pub fn new() -> Self {
        Self::default()
    }

    /// Vertices referenced by `a` but not `b`, and by `b` but not `a`, each
    /// in descending id order. The sweep visits vertices from the newest down
    /// and stops once every pending vertex is shared, so it costs about the
    /// size of the difference rather than of the cones.
    pub fn exclusive(&mut self, tangle: &Tangle, a: VertexId, b: VertexId) -> (&[VertexId], &[VertexId]) {
        for &v in &self.touched {
            self.side[v.index()] = 0;
        }
        self.touched.clear();
        self.heap.clear();
        self.only[0].clear();
        self.only[1].clear();
        if self.side.len() < tangle.len() {
            self.side.resize(tangle.len(), 0);
        }
        let mut pending = 0usize;
        for (v, bit) in [(a, 1u8), (b, 2u8)] {
            let old = self.side[v.index()];
            if old == 0 {
                self.touched.push(v);
                self.heap.push(v);
                pending += 1;
            } else if old != 3 {
                pending -= 1;
            }
            self.side[v.index()] = old | bit;
        }
        // Shared vertices are expanded too, so their ancestors become shared.
        while pending > 0 {
            let x = self.heap.pop().expect("pending vertices are queued");
            let s = self.side[x.index()];
            if s != 3 {
                pending -= 1;
                self.only[s as usize - 1].push(x);
            }
            for &p in tangle.parents(x) {
                let old = self.side[p.index()];
                let new = old | s;
                if old == new {
                    continue;
                }
                if old == 0 {
                    self.touched.push(p);
                    self.heap.push(p);
                }
                pending += (new != 3) as usize;
                pending -= (old == 1 || old == 2) as usize;
                self.side[p.index()] = new;
            }
        }
        (&self.only[0], &self.only[1])
    }
}

/// Immutable snapshot of the tangle up to a cutoff time, with cached
/// cumulative weights and tip set.
#[derive(Clone, Debug)]
pub struct View<'a> {
    tangle: &'a Tangle,
    len: usize,
    cutoff: f64,
    weights: Cow<'a, [u32]>,
    tips: Cow<'a, [VertexId]>,
}

/// The tangle as known at `now - h`. Before time `h` only the genesis is
/// visible.
pub fn snapshot(tangle: &Tangle, now: f64, h: f64) -> View<'_> {
    let cutoff = now - h;
    let len = tangle.prefix_len(cutoff);
    let weights = compute_weights(tangle, len);
    let tips = (0..len as u32)
        .map(VertexId)
        .filter(|&v| in_view_approvers(tangle, v, len).is_empty())
        .collect::<Vec<_>>();
    View {
        tangle,
        len,
        cutoff,
        weights: Cow::Owned(weights),
        tips: Cow::Owned(tips),
    }
}

#[inline]
fn in_view_approvers(tangle: &Tangle, v: VertexId, len: usize) -> &[VertexId] {
    let all = tangle.approvers(v);
    // Approver lists are ascending, so the in-view approvers are a prefix.
    let k = all.partition_point(|z| z.index() < len);
    &all[..k]
}

/// Below this size weights are computed by merging future-cone bitsets in
/// reverse topological order; above it by one past-cone sweep per vertex.
const BITSET_WEIGHT_LIMIT: usize = 2048;

/// Exact cumulative weights `H(x) = 1 + |F(x)|` for the prefix `[0, len)`.
pub fn compute_weights(tangle: &Tangle, len: usize) -> Vec<u32> {
    if len <= BITSET_WEIGHT_LIMIT {
        weights_by_bitsets(tangle, len)
    } else {
        weights_by_sweeps(tangle, len)
    }
}

fn weights_by_bitsets(tangle: &Tangle, len: usize) -> Vec<u32> {
    let words = len.div_ceil(64);
    let mut future = vec![0u64; words * len];
    let mut weights = vec![1u32; len];
    for x in (0..len).rev() {
        for &z in in_view_approvers(tangle, VertexId(x as u32), len) {
            let z = z.index();
            // z > x, so its row is already final.
            let (lo, hi) = future.split_at_mut(z * words);
            let row_x = &mut lo[x * words..(x + 1) * words];
            let row_z = &hi[..words];
            for (a, b) in row_x.iter_mut().zip(row_z) {
                *a |= *b;
            }
            row_x[z / 64] |= 1 << (z % 64);
        }
        let row = &future[x * words..(x + 1) * words];
        weights[x] += row.iter().map(|w| w.count_ones()).sum::<u32>();
    }
    weights
}

fn weights_by_sweeps(tangle: &Tangle, len: usize) -> Vec<u32> {
    let mut tracker = ViewTracker::new();
    tracker.advance_to_len(tangle, len);
    tracker.weights
}

impl<'a> View<'a> {
    #[inline]
    pub fn tangle(&self) -> &'a Tangle {
        self.tangle
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    /// Never true: every view contains the genesis.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    #[inline]
    pub fn contains(&self, v: VertexId) -> bool {
        v.index() < self.len
    }

    fn check(&self, v: VertexId) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::NotInView(v))
        }
    }

    pub fn genesis(&self) -> VertexId {
        VertexId::GENESIS
    }

    /// Tips of the view, ascending by id.
    #[inline]
    pub fn tips(&self) -> &[VertexId] {
        &self.tips
    }

    #[inline]
    pub fn is_tip(&self, v: VertexId) -> bool {
        self.approvers(v).is_empty()
    }

    /// Cached cumulative weight. `v` must be in the view.
    #[inline]
    pub fn weight(&self, v: VertexId) -> u32 {
        debug_assert!(self.contains(v));
        self.weights[v.index()]
    }

    pub fn cumulative_weight(&self, v: VertexId) -> Result<u32> {
        self.check(v)?;
        Ok(self.weight(v))
    }

    /// In-view approvers of `v`, ascending, with multiplicity.
    #[inline]
    pub fn approvers(&self, v: VertexId) -> &'a [VertexId] {
        in_view_approvers(self.tangle, v, self.len)
    }

    /// Vertices approved by `v` (empty for the genesis). Always in the view.
    #[inline]
    pub fn parents(&self, v: VertexId) -> &'a [VertexId] {
        self.tangle.parents(v)
    }

    /// Whether a (possibly empty) approval path leads from `u` to `v`.
    pub fn references(&self, u: VertexId, v: VertexId) -> Result<bool> {
        self.check(u)?;
        self.check(v)?;
        if u == v {
            return Ok(true);
        }
        if u < v {
            return Ok(false);
        }
        let mut marker = ConeMarker::new();
        marker.mark_past(self.tangle, &[u], v);
        Ok(marker.is_marked(v))
    }

    /// Vertices referenced by `x`, excluding `x`, ascending.
    pub fn past_cone(&self, x: VertexId) -> Result<Vec<VertexId>> {
        self.check(x)?;
        let mut marker = ConeMarker::new();
        marker.mark_past(self.tangle, &[x], VertexId::GENESIS);
        Ok((0..x.0).map(VertexId).filter(|&v| marker.is_marked(v)).collect())
    }

    /// View vertices referencing `x`, excluding `x`, ascending.
    pub fn future_cone(&self, x: VertexId) -> Result<Vec<VertexId>> {
        self.check(x)?;
        let mut marker = ConeMarker::new();
        marker.mark_future_until(self.tangle, x, self.len, &[]);
        Ok((x.0 + 1..self.len as u32)
            .map(VertexId)
            .filter(|&v| marker.is_marked(v))
            .collect())
    }

    /// Graphviz rendering: one node per vertex labelled `id:weight`, one edge
    /// per approval (a double approval is drawn twice).
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph tangle {\n  rankdir=RL;\n");
        for i in 0..self.len as u32 {
            let v = VertexId(i);
            let shape = if self.is_tip(v) { "circle" } else { "box" };
            let _ = writeln!(out, "  {} [label=\"{}:{}\", shape={}];", i, i, self.weight(v), shape);
        }
        for i in 1..self.len as u32 {
            for p in self.parents(VertexId(i)) {
                let _ = writeln!(out, "  {} -> {};", i, p.0);
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Incrementally maintained view for a monotonically advancing cutoff.
///
/// Each vertex entering the view adds one to the weight of every vertex in its
/// past cone, so the total work over a run is the sum of past-cone sizes.
#[derive(Clone, Debug)]
pub struct ViewTracker {
    len: usize,
    cutoff: f64,
    weights: Vec<u32>,
    tips: Vec<VertexId>,
    stamp: Vec<u32>,
    epoch: u32,
    stack: Vec<u32>,
}

impl Default for ViewTracker {
    fn default() -> Self {
        Self::new()
    }
}

impl ViewTracker {
    pub fn new() -> Self {
        ViewTracker {
            len: 1,
            cutoff: f64::NEG_INFINITY,
            weights: vec![1],
            tips: vec![VertexId::GENESIS],
            stamp: vec![0],
            epoch: 0,
            stack: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Moves the cutoff forward. A cutoff earlier than the current one only
    /// updates the recorded cutoff.
    pub fn advance(&mut self, tangle: &Tangle, cutoff: f64) {
        let target = tangle.prefix_len(cutoff).max(self.len);
        self.advance_to_len(tangle, target);
        self.cutoff = self.cutoff.max(cutoff);
    }

    fn advance_to_len(&mut self, tangle: &Tangle, target: usize) {
        if self.stamp.len() < target {
            self.stamp.resize(target, 0);
        }
        while self.len < target {
            let v = self.len as u32;
            self.add_vertex(tangle, VertexId(v));
            self.len += 1;
        }
    }

    fn add_vertex(&mut self, tangle: &Tangle, v: VertexId) {
        self.weights.push(1);
        if self.epoch == u32::MAX {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 0;
        }
        self.epoch += 1;
        let epoch = self.epoch;
        self.stack.clear();
        let parents = tangle.parents(v);
        for &p in parents {
            if self.stamp[p.index()] != epoch {
                self.stamp[p.index()] = epoch;
                self.stack.push(p.0);
            }
        }
        while let Some(x) = self.stack.pop() {
            self.weights[x as usize] += 1;
            if let Some([a, b]) = tangle.vertices[x as usize].approves {
                for p in [a, b] {
                    if self.stamp[p.index()] != epoch {
                        self.stamp[p.index()] = epoch;
                        self.stack.push(p.0);
                    }
                }
            }
        }
        for &p in parents {
            if let Ok(pos) = self.tips.binary_search(&p) {
                self.tips.remove(pos);
            }
        }
        // New ids are the largest so far; the tip list stays sorted.
        self.tips.push(v);
    }

    pub fn view<'a>(&'a self, tangle: &'a Tangle) -> View<'a> {
        View {
            tangle,
            len: self.len,
            cutoff: self.cutoff,
            weights: Cow::Borrowed(&self.weights),
            tips: Cow::Borrowed(&self.tips),
        }
    }
}
