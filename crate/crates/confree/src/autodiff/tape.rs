//! Reverse-mode automatic differentiation over scalar computation
//! graphs.
//!
//! Every node is conceptually one scalar per sample; batching is an
//! implementation detail (a node caches one value per *lane*, while
//! parameter and constant leaves broadcast a single value across all
//! lanes). The graph is acyclic by construction and node ids form a
//! valid topological order.
//!
//! Two differentiation paths exist:
//!
//! - [`Tape::grad`] emits new nodes for the per-lane partial
//!   derivatives of an output with respect to chosen leaves. The
//!   emitted nodes are ordinary ops, so derivative graphs are closed
//!   under differentiation: `grad(grad(u, x), x)` builds a second
//!   derivative that is still attached to the parameters.
//! - [`Tape::backward`] runs a numeric adjoint sweep from a
//!   scalar-valued root and returns summed gradients for broadcast
//!   leaves. One call is one backprop tick.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("unsupported derivative order {0} (supported: 1, 2)")]
    UnsupportedOrder(u8),
}

/// Index of a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) u32);

impl NodeId {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone)]
enum Op {
    /// Per-lane leaf; values supplied by the caller.
    Input { lanes: u32 },
    /// Broadcast scalar leaf (a network weight).
    Param,
    /// Broadcast scalar constant.
    Const,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Neg(NodeId),
    /// `c * a`
    Scale(NodeId, f64),
    /// `a + c`
    AddConst(NodeId, f64),
    Tanh(NodeId),
    Sin(NodeId),
    Cos(NodeId),
    Exp(NodeId),
    Square(NodeId),
    /// `sum_i terms[i].0 * terms[i].1 (+ bias)`
    Dot {
        terms: Box<[(NodeId, NodeId)]>,
        bias: Option<NodeId>,
    },
    /// `sum over lanes of a^2` — scalar-valued.
    SumSq(NodeId),
    /// `sum over lanes of a` — scalar-valued.
    SumLanes(NodeId),
}

impl Op {
    fn is_leaf(&self) -> bool {
        matches!(self, Op::Input { .. } | Op::Param | Op::Const)
    }
}

#[derive(Debug, Clone)]
enum Val {
    Scalar(f64),
    Lanes(Vec<f64>),
}

impl Val {
    fn lanes(&self) -> Option<usize> {
        match self {
            Val::Scalar(_) => None,
            Val::Lanes(v) => Some(v.len()),
        }
    }

    fn view(&self) -> VRef<'_> {
        match self {
            Val::Scalar(s) => VRef::S(*s),
            Val::Lanes(v) => VRef::L(v),
        }
    }
}

/// Borrowed view of a value or adjoint: broadcast scalar or lanes.
#[derive(Clone, Copy)]
enum VRef<'a> {
    S(f64),
    L(&'a [f64]),
}

enum Adj {
    Unset,
    Scalar(f64),
    Lanes(Vec<f64>),
}

impl Adj {
    fn view(&self) -> Option<VRef<'_>> {
        match self {
            Adj::Unset => None,
            Adj::Scalar(s) => Some(VRef::S(*s)),
            Adj::Lanes(v) => Some(VRef::L(v)),
        }
    }
}

pub struct Tape {
    ops: Vec<Op>,
    vals: Vec<Val>,
    backprops: u64,
    adj_scratch: Vec<Adj>,
    lane_pool: Vec<Vec<f64>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            ops: Vec::new(),
            vals: Vec::new(),
            backprops: 0,
            adj_scratch: Vec::new(),
            lane_pool: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Number of reverse-mode sweeps performed so far.
    pub fn backprops(&self) -> u64 {
        self.backprops
    }

    fn push(&mut self, op: Op, val: Val) -> NodeId {
        let id = NodeId(self.ops.len() as u32);
        self.ops.push(op);
        self.vals.push(val);
        id
    }

    // ---- leaves ---------------------------------------------------

    pub fn input(&mut self, lanes: usize) -> NodeId {
        assert!(lanes > 0);
        self.push(
            Op::Input {
                lanes: lanes as u32,
            },
            Val::Lanes(vec![0.0; lanes]),
        )
    }

    pub fn param(&mut self, init: f64) -> NodeId {
        self.push(Op::Param, Val::Scalar(init))
    }

    pub fn constant(&mut self, c: f64) -> NodeId {
        self.push(Op::Const, Val::Scalar(c))
    }

    pub fn set_input(&mut self, id: NodeId, values: &[f64]) {
        match (&self.ops[id.idx()], &mut self.vals[id.idx()]) {
            (Op::Input { lanes }, Val::Lanes(v)) => {
                assert_eq!(values.len(), *lanes as usize, "lane count mismatch");
                v.copy_from_slice(values);
            }
            _ => panic!("set_input on a non-input node"),
        }
    }

    pub fn set_param(&mut self, id: NodeId, value: f64) {
        match (&self.ops[id.idx()], &mut self.vals[id.idx()]) {
            (Op::Param, Val::Scalar(v)) => *v = value,
            _ => panic!("set_param on a non-param node"),
        }
    }

    pub fn param_value(&self, id: NodeId) -> f64 {
        match (&self.ops[id.idx()], &self.vals[id.idx()]) {
            (Op::Param, Val::Scalar(v)) => *v,
            _ => panic!("param_value on a non-param node"),
        }
    }

    // ---- ops ------------------------------------------------------

    fn op(&mut self, op: Op) -> NodeId {
        let val = eval_op(&op, &self.vals);
        self.push(op, val)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.op(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.op(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.op(Op::Mul(a, b))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.op(Op::Neg(a))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.op(Op::Scale(a, c))
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        self.op(Op::AddConst(a, c))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.op(Op::Tanh(a))
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        self.op(Op::Sin(a))
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        self.op(Op::Cos(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.op(Op::Exp(a))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.op(Op::Square(a))
    }

    pub fn dot(&mut self, terms: &[(NodeId, NodeId)], bias: Option<NodeId>) -> NodeId {
        self.op(Op::Dot {
            terms: terms.into(),
            bias,
        })
    }

    pub fn sum_sq(&mut self, a: NodeId) -> NodeId {
        self.op(Op::SumSq(a))
    }

    pub fn sum_lanes(&mut self, a: NodeId) -> NodeId {
        self.op(Op::SumLanes(a))
    }

    // ---- values ---------------------------------------------------

    /// Value of a scalar-valued (broadcast or reduced) node.
    pub fn scalar_value(&self, id: NodeId) -> f64 {
        match &self.vals[id.idx()] {
            Val::Scalar(v) => *v,
            Val::Lanes(v) if v.len() == 1 => v[0],
            _ => panic!("scalar_value on a lanes-valued node"),
        }
    }

    pub fn lane_values(&self, id: NodeId) -> &[f64] {
        match &self.vals[id.idx()] {
            Val::Lanes(v) => v,
            Val::Scalar(v) => std::slice::from_ref(v),
        }
    }

    /// Recompute every non-leaf value in topological order. Call after
    /// changing inputs or parameters.
    pub fn refresh(&mut self) {
        for i in 0..self.ops.len() {
            if self.ops[i].is_leaf() {
                continue;
            }
            let val = eval_op(&self.ops[i], &self.vals[..i]);
            self.vals[i] = val;
        }
    }

    /// Recompute only the nodes flagged in `mask` (callers precompute
    /// per-root ancestor masks with [`Tape::ancestors`]).
    pub fn refresh_masked(&mut self, mask: &[bool]) {
        assert_eq!(mask.len(), self.ops.len());
        for (i, live) in mask.iter().enumerate() {
            if !live || self.ops[i].is_leaf() {
                continue;
            }
            let val = eval_op(&self.ops[i], &self.vals[..i]);
            self.vals[i] = val;
        }
    }

    /// All nodes the given root depends on, root included.
    pub fn ancestors(&self, root: NodeId) -> Vec<bool> {
        let mut mask = vec![false; self.ops.len()];
        mask[root.idx()] = true;
        for i in (0..=root.idx()).rev() {
            if !mask[i] {
                continue;
            }
            for_each_operand(&self.ops[i], |dep| mask[dep.idx()] = true);
        }
        mask
    }

    // ---- numeric backward -------------------------------------------

    /// Numeric adjoint sweep from a scalar-valued root. Returns the
    /// gradient for each requested broadcast leaf, with lane
    /// contributions summed. Counts as one backprop.
    pub fn backward(&mut self, root: NodeId, leaves: &[NodeId]) -> Vec<f64> {
        assert!(
            self.vals[root.idx()].lanes().is_none(),
            "backward root must be scalar-valued"
        );
        self.backprops += 1;
        if self.adj_scratch.len() < self.ops.len() {
            self.adj_scratch.resize_with(self.ops.len(), || Adj::Unset);
        }
        self.adj_scratch[root.idx()] = Adj::Scalar(1.0);

        for i in (0..=root.idx()).rev() {
            if self.ops[i].is_leaf() {
                continue; // keep leaf adjoints for extraction below
            }
            let adj = std::mem::replace(&mut self.adj_scratch[i], Adj::Unset);
            if let Some(view) = adj.view() {
                let (down, _) = self.adj_scratch.split_at_mut(i);
                apply_vjp(&self.ops[i], &self.vals, view, down, &mut self.lane_pool);
            }
            if let Adj::Lanes(v) = adj {
                self.lane_pool.push(v);
            }
        }

        let out = leaves
            .iter()
            .map(|l| match &self.adj_scratch[l.idx()] {
                Adj::Unset => 0.0,
                Adj::Scalar(s) => *s,
                Adj::Lanes(_) => panic!("requested leaf has a per-lane adjoint"),
            })
            .collect();

        for i in 0..=root.idx() {
            let slot = std::mem::replace(&mut self.adj_scratch[i], Adj::Unset);
            if let Adj::Lanes(v) = slot {
                self.lane_pool.push(v);
            }
        }
        out
    }

    // ---- symbolic (node-emitting) differentiation -----------------

    /// Per-lane partial derivatives of `y` with respect to the given
    /// leaves, built as new nodes on the tape. A leaf `y` does not
    /// depend on yields a zero constant.
    pub fn grad(&mut self, y: NodeId, wrt: &[NodeId]) -> Vec<NodeId> {
        let n = self.len();
        let mut active = vec![false; n];
        for w in wrt {
            assert!(self.ops[w.idx()].is_leaf(), "grad target must be a leaf");
            active[w.idx()] = true;
        }
        for i in 0..=y.idx() {
            if active[i] {
                continue;
            }
            let mut any = false;
            for_each_operand(&self.ops[i], |d| any |= active[d.idx()]);
            active[i] = any;
        }
        let needed = self.ancestors(y);

        let mut contribs: Vec<Vec<(NodeId, NodeId)>> = vec![Vec::new(); n];
        let mut adj_node: Vec<Option<NodeId>> = vec![None; n];
        let one = self.constant(1.0);
        let neg_one = self.constant(-1.0);
        adj_node[y.idx()] = Some(one);

        for i in (0..=y.idx()).rev() {
            if !(active[i] && needed[i]) {
                continue;
            }
            let adj = match adj_node[i] {
                Some(a) => a,
                None => {
                    let pairs = std::mem::take(&mut contribs[i]);
                    if pairs.is_empty() {
                        continue;
                    }
                    let a = self.accumulate_pairs(pairs, one);
                    adj_node[i] = Some(a);
                    a
                }
            };
            if self.ops[i].is_leaf() {
                continue;
            }
            // Chain-rule emission: push (coefficient, adjoint) pairs
            // into each active operand; they are summed into a single
            // node once the operand's own turn comes.
            let op = self.ops[i].clone();
            let this = NodeId(i as u32);
            macro_rules! push {
                ($target:expr, $coeff:expr) => {
                    if active[$target.idx()] {
                        let coeff = $coeff;
                        contribs[$target.idx()].push((coeff, adj));
                    }
                };
            }
            match op {
                Op::Input { .. } | Op::Param | Op::Const => {}
                Op::Add(a, b) => {
                    push!(a, one);
                    push!(b, one);
                }
                Op::Sub(a, b) => {
                    push!(a, one);
                    push!(b, neg_one);
                }
                Op::Mul(a, b) => {
                    push!(a, b);
                    push!(b, a);
                }
                Op::Neg(a) => push!(a, neg_one),
                Op::Scale(a, c) => push!(a, self.constant(c)),
                Op::AddConst(a, _) => push!(a, one),
                Op::Tanh(a) => {
                    // d tanh = 1 - tanh^2, reusing the output node.
                    push!(a, {
                        let sq = self.square(this);
                        let nsq = self.neg(sq);
                        self.add_const(nsq, 1.0)
                    });
                }
                Op::Sin(a) => push!(a, self.cos(a)),
                Op::Cos(a) => push!(a, {
                    let s = self.sin(a);
                    self.neg(s)
                }),
                Op::Exp(a) => push!(a, this),
                Op::Square(a) => push!(a, self.scale(a, 2.0)),
                Op::Dot { terms, bias } => {
                    for &(a, b) in terms.iter() {
                        push!(a, b);
                        push!(b, a);
                    }
                    if let Some(b) = bias {
                        push!(b, one);
                    }
                }
                Op::SumSq(a) => push!(a, self.scale(a, 2.0)),
                Op::SumLanes(a) => push!(a, one),
            }
        }

        wrt.iter()
            .map(|w| match adj_node[w.idx()] {
                Some(a) => a,
                None => self.constant(0.0),
            })
            .collect()
    }

    /// Materialize `sum_i coeff_i * adj_i` as a single node.
    fn accumulate_pairs(&mut self, pairs: Vec<(NodeId, NodeId)>, one: NodeId) -> NodeId {
        if pairs.len() == 1 {
            let (coeff, adj) = pairs[0];
            if coeff == one {
                return adj;
            }
            return self.mul(coeff, adj);
        }
        self.dot(&pairs, None)
    }
}

fn for_each_operand(op: &Op, mut f: impl FnMut(NodeId)) {
    match op {
        Op::Input { .. } | Op::Param | Op::Const => {}
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
            f(*a);
            f(*b);
        }
        Op::Neg(a)
        | Op::Scale(a, _)
        | Op::AddConst(a, _)
        | Op::Tanh(a)
        | Op::Sin(a)
        | Op::Cos(a)
        | Op::Exp(a)
        | Op::Square(a)
        | Op::SumSq(a)
        | Op::SumLanes(a) => f(*a),
        Op::Dot { terms, bias } => {
            for (a, b) in terms.iter() {
                f(*a);
                f(*b);
            }
            if let Some(b) = bias {
                f(*b);
            }
        }
    }
}

fn combine_lanes(a: Option<usize>, b: Option<usize>) -> Option<usize> {
    match (a, b) {
        (None, None) => None,
        (Some(n), None) | (None, Some(n)) => Some(n),
        (Some(n), Some(m)) => {
            assert_eq!(n, m, "lane count mismatch between operands");
            Some(n)
        }
    }
}

fn map1(vals: &[Val], a: NodeId, f: impl Fn(f64) -> f64) -> Val {
    match &vals[a.idx()] {
        Val::Scalar(x) => Val::Scalar(f(*x)),
        Val::Lanes(xs) => Val::Lanes(xs.iter().map(|&x| f(x)).collect()),
    }
}

fn map2(vals: &[Val], a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Val {
    let va = &vals[a.idx()];
    let vb = &vals[b.idx()];
    match (va, vb) {
        (Val::Scalar(x), Val::Scalar(y)) => Val::Scalar(f(*x, *y)),
        (Val::Scalar(x), Val::Lanes(ys)) => Val::Lanes(ys.iter().map(|&y| f(*x, y)).collect()),
        (Val::Lanes(xs), Val::Scalar(y)) => Val::Lanes(xs.iter().map(|&x| f(x, *y)).collect()),
        (Val::Lanes(xs), Val::Lanes(ys)) => {
            assert_eq!(xs.len(), ys.len(), "lane count mismatch between operands");
            Val::Lanes(xs.iter().zip(ys).map(|(&x, &y)| f(x, y)).collect())
        }
    }
}

fn eval_op(op: &Op, vals: &[Val]) -> Val {
    match op {
        // Leaves hold caller-supplied values; re-evaluating one would
        // clobber them.
        Op::Input { .. } | Op::Param | Op::Const => unreachable!("eval_op on a leaf"),
        Op::Add(a, b) => map2(vals, *a, *b, |x, y| x + y),
        Op::Sub(a, b) => map2(vals, *a, *b, |x, y| x - y),
        Op::Mul(a, b) => map2(vals, *a, *b, |x, y| x * y),
        Op::Neg(a) => map1(vals, *a, |x| -x),
        Op::Scale(a, c) => {
            let c = *c;
            map1(vals, *a, move |x| c * x)
        }
        Op::AddConst(a, c) => {
            let c = *c;
            map1(vals, *a, move |x| x + c)
        }
        Op::Tanh(a) => map1(vals, *a, f64::tanh),
        Op::Sin(a) => map1(vals, *a, f64::sin),
        Op::Cos(a) => map1(vals, *a, f64::cos),
        Op::Exp(a) => map1(vals, *a, f64::exp),
        Op::Square(a) => map1(vals, *a, |x| x * x),
        Op::Dot { terms, bias } => {
            let mut lanes = bias.map(|b| vals[b.idx()].lanes()).unwrap_or(None);
            for (a, b) in terms.iter() {
                lanes = combine_lanes(lanes, vals[a.idx()].lanes());
                lanes = combine_lanes(lanes, vals[b.idx()].lanes());
            }
            match lanes {
                None => {
                    let mut acc = match bias {
                        Some(b) => match &vals[b.idx()] {
                            Val::Scalar(s) => *s,
                            _ => unreachable!(),
                        },
                        None => 0.0,
                    };
                    for (a, b) in terms.iter() {
                        match (&vals[a.idx()], &vals[b.idx()]) {
                            (Val::Scalar(x), Val::Scalar(y)) => acc += x * y,
                            _ => unreachable!(),
                        }
                    }
                    Val::Scalar(acc)
                }
                Some(n) => {
                    let mut out = vec![0.0; n];
                    let mut constant = 0.0;
                    if let Some(b) = bias {
                        match &vals[b.idx()] {
                            Val::Scalar(s) => constant += s,
                            Val::Lanes(v) => {
                                for (o, x) in out.iter_mut().zip(v) {
                                    *o += x;
                                }
                            }
                        }
                    }
                    for (a, b) in terms.iter() {
                        match (&vals[a.idx()], &vals[b.idx()]) {
                            (Val::Scalar(x), Val::Scalar(y)) => constant += x * y,
                            (Val::Scalar(x), Val::Lanes(ys)) => {
                                for (o, y) in out.iter_mut().zip(ys) {
                                    *o += x * y;
                                }
                            }
                            (Val::Lanes(xs), Val::Scalar(y)) => {
                                for (o, x) in out.iter_mut().zip(xs) {
                                    *o += x * y;
                                }
                            }
                            (Val::Lanes(xs), Val::Lanes(ys)) => {
                                for ((o, x), y) in out.iter_mut().zip(xs).zip(ys) {
                                    *o += x * y;
                                }
                            }
                        }
                    }
                    if constant != 0.0 {
                        for o in &mut out {
                            *o += constant;
                        }
                    }
                    Val::Lanes(out)
                }
            }
        }
        Op::SumSq(a) => match &vals[a.idx()] {
            Val::Scalar(x) => Val::Scalar(x * x),
            Val::Lanes(xs) => Val::Scalar(xs.iter().map(|x| x * x).sum()),
        },
        Op::SumLanes(a) => match &vals[a.idx()] {
            Val::Scalar(x) => Val::Scalar(*x),
            Val::Lanes(xs) => Val::Scalar(xs.iter().sum()),
        },
    }
}

/// Accumulate `coeff * adj` into an adjoint slot. Broadcast targets
/// (params, constants, reduced nodes) receive the lane sum; per-lane
/// targets receive elementwise products, broadcasting scalars.
fn accumulate(
    slot: &mut Adj,
    target_lanes: Option<usize>,
    coeff: VRef<'_>,
    adj: VRef<'_>,
    pool: &mut Vec<Vec<f64>>,
) {
    match target_lanes {
        None => {
            let s = match (coeff, adj) {
                (VRef::S(c), VRef::S(a)) => c * a,
                (VRef::S(c), VRef::L(av)) => c * av.iter().sum::<f64>(),
                (VRef::L(cv), VRef::S(a)) => a * cv.iter().sum::<f64>(),
                (VRef::L(cv), VRef::L(av)) => {
                    assert_eq!(cv.len(), av.len());
                    cv.iter().zip(av).map(|(c, a)| c * a).sum()
                }
            };
            match slot {
                Adj::Unset => *slot = Adj::Scalar(s),
                Adj::Scalar(x) => *x += s,
                Adj::Lanes(_) => unreachable!("scalar target with lanes adjoint"),
            }
        }
        Some(n) => {
            if matches!(slot, Adj::Unset) {
                let mut v = pool.pop().unwrap_or_default();
                v.clear();
                v.resize(n, 0.0);
                *slot = Adj::Lanes(v);
            }
            let out = match slot {
                Adj::Lanes(v) => v,
                _ => unreachable!("lanes target with scalar adjoint"),
            };
            assert_eq!(out.len(), n);
            match (coeff, adj) {
                (VRef::S(c), VRef::S(a)) => {
                    let s = c * a;
                    for o in out.iter_mut() {
                        *o += s;
                    }
                }
                (VRef::S(c), VRef::L(av)) => {
                    for (o, a) in out.iter_mut().zip(av) {
                        *o += c * a;
                    }
                }
                (VRef::L(cv), VRef::S(a)) => {
                    for (o, c) in out.iter_mut().zip(cv) {
                        *o += c * a;
                    }
                }
                (VRef::L(cv), VRef::L(av)) => {
                    for ((o, c), a) in out.iter_mut().zip(cv).zip(av) {
                        *o += c * a;
                    }
                }
            }
        }
    }
}

fn apply_vjp(op: &Op, vals: &[Val], adj: VRef<'_>, down: &mut [Adj], pool: &mut Vec<Vec<f64>>) {
    let add = |down: &mut [Adj], target: NodeId, coeff: VRef<'_>, pool: &mut Vec<Vec<f64>>| {
        let lanes = vals[target.idx()].lanes();
        accumulate(&mut down[target.idx()], lanes, coeff, adj, pool);
    };
    match op {
        Op::Input { .. } | Op::Param | Op::Const => {}
        Op::Add(a, b) => {
            add(down, *a, VRef::S(1.0), pool);
            add(down, *b, VRef::S(1.0), pool);
        }
        Op::Sub(a, b) => {
            add(down, *a, VRef::S(1.0), pool);
            add(down, *b, VRef::S(-1.0), pool);
        }
        Op::Mul(a, b) => {
            add(down, *a, vals[b.idx()].view(), pool);
            add(down, *b, vals[a.idx()].view(), pool);
        }
        Op::Neg(a) => add(down, *a, VRef::S(-1.0), pool),
        Op::Scale(a, c) => add(down, *a, VRef::S(*c), pool),
        Op::AddConst(a, _) => add(down, *a, VRef::S(1.0), pool),
        Op::Tanh(a) => {
            // 1 - tanh^2(a); reuse the operand value.
            match &vals[a.idx()] {
                Val::Scalar(x) => {
                    let t = x.tanh();
                    add(down, *a, VRef::S(1.0 - t * t), pool);
                }
                Val::Lanes(xs) => {
                    let mut buf = pool.pop().unwrap_or_default();
                    buf.clear();
                    buf.extend(xs.iter().map(|x| {
                        let t = x.tanh();
                        1.0 - t * t
                    }));
                    add(down, *a, VRef::L(&buf), pool);
                    pool.push(buf);
                }
            }
        }
        Op::Sin(a) => match &vals[a.idx()] {
            Val::Scalar(x) => add(down, *a, VRef::S(x.cos()), pool),
            Val::Lanes(xs) => {
                let mut buf = pool.pop().unwrap_or_default();
                buf.clear();
                buf.extend(xs.iter().map(|x| x.cos()));
                add(down, *a, VRef::L(&buf), pool);
                pool.push(buf);
            }
        },
        Op::Cos(a) => match &vals[a.idx()] {
            Val::Scalar(x) => add(down, *a, VRef::S(-x.sin()), pool),
            Val::Lanes(xs) => {
                let mut buf = pool.pop().unwrap_or_default();
                buf.clear();
                buf.extend(xs.iter().map(|x| -x.sin()));
                add(down, *a, VRef::L(&buf), pool);
                pool.push(buf);
            }
        },
        Op::Exp(a) => match &vals[a.idx()] {
            Val::Scalar(x) => add(down, *a, VRef::S(x.exp()), pool),
            Val::Lanes(xs) => {
                let mut buf = pool.pop().unwrap_or_default();
                buf.clear();
                buf.extend(xs.iter().map(|x| x.exp()));
                add(down, *a, VRef::L(&buf), pool);
                pool.push(buf);
            }
        },
        Op::Square(a) => match &vals[a.idx()] {
            Val::Scalar(x) => add(down, *a, VRef::S(2.0 * x), pool),
            Val::Lanes(xs) => {
                let mut buf = pool.pop().unwrap_or_default();
                buf.clear();
                buf.extend(xs.iter().map(|x| 2.0 * x));
                add(down, *a, VRef::L(&buf), pool);
                pool.push(buf);
            }
        },
        Op::Dot { terms, bias } => {
            for (a, b) in terms.iter() {
                add(down, *a, vals[b.idx()].view(), pool);
                add(down, *b, vals[a.idx()].view(), pool);
            }
            if let Some(b) = bias {
                add(down, *b, VRef::S(1.0), pool);
            }
        }
        Op::SumSq(a) => match &vals[a.idx()] {
            Val::Scalar(x) => add(down, *a, VRef::S(2.0 * x), pool),
            Val::Lanes(xs) => {
                let mut buf = pool.pop().unwrap_or_default();
                buf.clear();
                buf.extend(xs.iter().map(|x| 2.0 * x));
                add(down, *a, VRef::L(&buf), pool);
                pool.push(buf);
            }
        },
        Op::SumLanes(a) => add(down, *a, VRef::S(1.0), pool),
    }
}
