//! Minimal reactive behaviour-tree engine.
//!
//! The whole tree is re-ticked from the root every cycle. Composites keep no
//! memory; leaves may, and can tell whether they were ticked on the previous
//! cycle through [`TickContext`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Success,
    Failure,
    Running,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TickContext {
    /// Index of the current tick, starting at 1.
    pub tick: u64,
}

/// Remembers the last tick a leaf ran, to detect (re-)entry.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EntryTracker {
    last: Option<u64>,
}

impl EntryTracker {
    /// Record this tick; true if the leaf was not ticked on the previous one.
    pub fn enter(&mut self, ctx: &TickContext) -> bool {
        let entered = self.last != Some(ctx.tick.wrapping_sub(1));
        self.last = Some(ctx.tick);
        entered
    }
}

pub trait Leaf<B> {
    fn name(&self) -> &str;
    fn tick(&mut self, bb: &mut B, ctx: &TickContext) -> Status;
}

pub enum Node<B> {
    Sequence(String, Vec<Node<B>>),
    Selector(String, Vec<Node<B>>),
    Leaf(Box<dyn Leaf<B> + Send>),
}

impl<B> std::fmt::Debug for Node<B> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Node::Sequence(n, c) => f.debug_tuple("Sequence").field(n).field(c).finish(),
            Node::Selector(n, c) => f.debug_tuple("Selector").field(n).field(c).finish(),
            Node::Leaf(l) => f.debug_tuple("Leaf").field(&l.name()).finish(),
        }
    }
}

struct FnAction<B, F> {
    name: String,
    f: F,
    _b: std::marker::PhantomData<fn(&mut B)>,
}

impl<B, F: FnMut(&mut B) -> Status> Leaf<B> for FnAction<B, F> {
    fn name(&self) -> &str {
        &self.name
    }
    fn tick(&mut self, bb: &mut B, _: &TickContext) -> Status {
        (self.f)(bb)
    }
}

impl<B: 'static> Node<B> {
    pub fn sequence(name: &str, children: Vec<Node<B>>) -> Self {
        Node::Sequence(name.to_owned(), children)
    }

    pub fn selector(name: &str, children: Vec<Node<B>>) -> Self {
        Node::Selector(name.to_owned(), children)
    }

    pub fn leaf(l: impl Leaf<B> + Send + 'static) -> Self {
        Node::Leaf(Box::new(l))
    }

    pub fn action(name: &str, f: impl FnMut(&mut B) -> Status + Send + 'static) -> Self {
        Node::Leaf(Box::new(FnAction { name: name.to_owned(), f, _b: std::marker::PhantomData }))
    }

    pub fn condition(name: &str, f: impl Fn(&B) -> bool + Send + 'static) -> Self {
        Self::action(name, move |bb| if f(bb) { Status::Success } else { Status::Failure })
    }
}

impl<B> Node<B> {
    pub fn name(&self) -> &str {
        match self {
            Node::Sequence(n, _) | Node::Selector(n, _) => n,
            Node::Leaf(l) => l.name(),
        }
    }

    /// Check that every composite has children.
    pub fn validate(&self) -> Result<()> {
        match self {
            Node::Sequence(n, c) | Node::Selector(n, c) => {
                if c.is_empty() {
                    return Err(Error::MalformedTree(format!("composite '{n}' has no children")));
                }
                c.iter().try_for_each(Node::validate)
            }
            Node::Leaf(_) => Ok(()),
        }
    }

    pub fn tick(&mut self, bb: &mut B, ctx: &TickContext) -> Result<Status> {
        match self {
            Node::Sequence(n, children) => {
                if children.is_empty() {
                    return Err(Error::MalformedTree(format!("sequence '{n}' has no children")));
                }
                for c in children {
                    let s = c.tick(bb, ctx)?;
                    if s != Status::Success {
                        return Ok(s);
                    }
                }
                Ok(Status::Success)
            }
            Node::Selector(n, children) => {
                if children.is_empty() {
                    return Err(Error::MalformedTree(format!("selector '{n}' has no children")));
                }
                for c in children {
                    let s = c.tick(bb, ctx)?;
                    if s != Status::Failure {
                        return Ok(s);
                    }
                }
                Ok(Status::Failure)
            }
            Node::Leaf(l) => Ok(l.tick(bb, ctx)),
        }
    }
}

/// A root node plus its tick counter.
#[derive(Debug)]
pub struct Tree<B> {
    root: Node<B>,
    ticks: u64,
}

impl<B> Tree<B> {
    pub fn new(root: Node<B>) -> Result<Self> {
        root.validate()?;
        Ok(Self { root, ticks: 0 })
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn tick(&mut self, bb: &mut B) -> Result<Status> {
        self.ticks += 1;
        let ctx = TickContext { tick: self.ticks };
        self.root.tick(bb, &ctx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Log = Vec<&'static str>;

    fn fixed(name: &'static str, s: Status) -> Node<Log> {
        Node::action(name, move |log: &mut Log| {
            log.push(name);
            s
        })
    }

    #[test]
    fn sequence_and_selector_semantics() {
        let mut log = Log::new();
        let ctx = TickContext { tick: 1 };
        let mut seq = Node::sequence("s", vec![fixed("a", Status::Success), fixed("b", Status::Success)]);
        assert_eq!(seq.tick(&mut log, &ctx).unwrap(), Status::Success);

        log.clear();
        let mut seq = Node::sequence("s", vec![fixed("a", Status::Running), fixed("b", Status::Success)]);
        assert_eq!(seq.tick(&mut log, &ctx).unwrap(), Status::Running);
        assert_eq!(log, vec!["a"]);

        log.clear();
        let mut sel = Node::selector("f", vec![fixed("a", Status::Failure), fixed("b", Status::Success)]);
        assert_eq!(sel.tick(&mut log, &ctx).unwrap(), Status::Success);
        assert_eq!(log, vec!["a", "b"]);

        let mut sel = Node::selector("f", vec![fixed("a", Status::Failure), fixed("b", Status::Failure)]);
        assert_eq!(sel.tick(&mut log, &ctx).unwrap(), Status::Failure);
    }

    #[test]
    fn empty_composite_is_malformed() {
        let n: Node<Log> = Node::sequence("empty", vec![]);
        assert!(matches!(Tree::new(n), Err(Error::MalformedTree(_))));
        let mut n: Node<Log> = Node::selector("top", vec![Node::selector("inner", vec![])]);
        assert!(n.validate().is_err());
        assert!(n.tick(&mut Log::new(), &TickContext { tick: 1 }).is_err());
    }

    #[test]
    fn condition_leaf() {
        let mut n = Node::condition("nonempty", |l: &Log| !l.is_empty());
        let ctx = TickContext { tick: 1 };
        assert_eq!(n.tick(&mut Log::new(), &ctx).unwrap(), Status::Failure);
        assert_eq!(n.tick(&mut vec!["x"], &ctx).unwrap(), Status::Success);
    }

    #[test]
    fn entry_tracking() {
        let mut e = EntryTracker::default();
        assert!(e.enter(&TickContext { tick: 1 }));
        assert!(!e.enter(&TickContext { tick: 2 }));
        assert!(e.enter(&TickContext { tick: 4 }));
    }

    #[test]
    fn identical_inputs_identical_statuses() {
        let build = || {
            Tree::new(Node::sequence(
                "root",
                vec![
                    Node::condition("short", |l: &Log| l.len() < 3),
                    Node::selector("pick", vec![fixed("a", Status::Failure), fixed("b", Status::Running)]),
                ],
            ))
            .unwrap()
        };
        let (mut t1, mut t2) = (build(), build());
        let (mut l1, mut l2) = (Log::new(), Log::new());
        for _ in 0..5 {
            assert_eq!(t1.tick(&mut l1).unwrap(), t2.tick(&mut l2).unwrap());
        }
        assert_eq!(l1, l2);
    }
}
