//! Enumeration of connected vertex sets of a graph given by adjacency lists.
//!
//! Every connected set containing the root is produced exactly once: at each
//! step the search either takes the next frontier vertex or bans it for the
//! rest of that branch.

use std::ops::ControlFlow;

const FREE: u8 = 0;
const MEMBER: u8 = 1;
const FRONTIER: u8 = 2;
const BANNED: u8 = 3;

pub struct ConnectedSearch<'a, A, P> {
    adj: A,
    allowed: P,
    state: Vec<u8>,
    members: Vec<u32>,
    max_size: usize,
    _marker: std::marker::PhantomData<&'a ()>,
}

impl<'a, A, P> ConnectedSearch<'a, A, P>
where
    A: Fn(u32) -> &'a [u32],
    P: Fn(u32) -> bool,
{
    /// `allowed` restricts which vertices may join a set (the root is always allowed).
    pub fn new(universe: usize, adj: A, allowed: P, max_size: usize) -> Self {
        ConnectedSearch {
            adj,
            allowed,
            state: vec![FREE; universe],
            members: Vec::with_capacity(max_size),
            max_size,
            _marker: std::marker::PhantomData,
        }
    }

    /// Visits every connected set of size `1..=max_size` containing `root`.
    /// The slice passed to `visit` lists members in discovery order.
    pub fn run<B>(&mut self, root: u32, visit: &mut impl FnMut(&[u32]) -> ControlFlow<B>) -> ControlFlow<B> {
        if self.max_size == 0 {
            return ControlFlow::Continue(());
        }
        self.state[root as usize] = MEMBER;
        self.members.push(root);
        let cands = self.expand(root, Vec::new());
        let r = self.grow(&cands, visit);
        if r.is_break() {
            self.state.iter_mut().for_each(|s| *s = FREE);
            self.members.clear();
        } else {
            for &c in &cands {
                self.state[c as usize] = FREE;
            }
            self.state[root as usize] = FREE;
            self.members.pop();
        }
        r
    }

    fn expand(&mut self, w: u32, mut into: Vec<u32>) -> Vec<u32> {
        for &x in (self.adj)(w) {
            if self.state[x as usize] == FREE && (self.allowed)(x) {
                self.state[x as usize] = FRONTIER;
                into.push(x);
            }
        }
        into
    }

    fn grow<B>(&mut self, cands: &[u32], visit: &mut impl FnMut(&[u32]) -> ControlFlow<B>) -> ControlFlow<B> {
        visit(&self.members)?;
        if self.members.len() >= self.max_size {
            return ControlFlow::Continue(());
        }
        for (i, &w) in cands.iter().enumerate() {
            let keep = cands.len() - i - 1;
            let next = self.expand(w, cands[i + 1..].to_vec());
            self.state[w as usize] = MEMBER;
            self.members.push(w);
            let r = self.grow(&next, visit);
            self.members.pop();
            for &x in &next[keep..] {
                self.state[x as usize] = FREE;
            }
            self.state[w as usize] = BANNED;
            r?;
        }
        for &w in cands {
            self.state[w as usize] = FRONTIER;
        }
        ControlFlow::Continue(())
    }
}
