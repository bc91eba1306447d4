//! Longest-prefix-match table over IPv4 prefixes.

use std::net::Ipv4Addr;

use crate::types::Ipv4Net;

#[derive(Clone, Debug)]
struct Node<T> {
    children: [Option<u32>; 2],
    value: Option<T>,
}

impl<T> Node<T> {
    fn empty() -> Self {
        Node {
            children: [None, None],
            value: None,
        }
    }
}

/// Binary trie keyed by prefix bits. Inserting the same prefix twice replaces
/// the stored value.
#[derive(Clone, Debug)]
pub struct PrefixTable<T> {
    nodes: Vec<Node<T>>,
    len: usize,
}

impl<T> Default for PrefixTable<T> {
    fn default() -> Self {
        PrefixTable {
            nodes: vec![Node::empty()],
            len: 0,
        }
    }
}

fn bit(addr: u32, depth: u8) -> usize {
    ((addr >> (31 - depth as u32)) & 1) as usize
}

impl<T> PrefixTable<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn insert(&mut self, prefix: Ipv4Net, value: T) -> Option<T> {
        let mut cur = 0usize;
        for depth in 0..prefix.len() {
            let b = bit(prefix.bits(), depth);
            cur = match self.nodes[cur].children[b] {
                Some(next) => next as usize,
                None => {
                    self.nodes.push(Node::empty());
                    let idx = self.nodes.len() - 1;
                    self.nodes[cur].children[b] = Some(idx as u32);
                    idx
                }
            };
        }
        let old = self.nodes[cur].value.replace(value);
        if old.is_none() {
            self.len += 1;
        }
        old
    }

    /// Most specific prefix containing `ip`, with its value.
    pub fn longest_match(&self, ip: Ipv4Addr) -> Option<(u8, &T)> {
        let addr = u32::from(ip);
        let mut cur = 0usize;
        let mut best = self.nodes[0].value.as_ref().map(|v| (0u8, v));
        for depth in 0..32u8 {
            match self.nodes[cur].children[bit(addr, depth)] {
                Some(next) => {
                    cur = next as usize;
                    if let Some(v) = self.nodes[cur].value.as_ref() {
                        best = Some((depth + 1, v));
                    }
                }
                None => break,
            }
        }
        best
    }

    pub fn contains_addr(&self, ip: Ipv4Addr) -> bool {
        self.longest_match(ip).is_some()
    }
}

impl<T> FromIterator<(Ipv4Net, T)> for PrefixTable<T> {
    fn from_iter<I: IntoIterator<Item = (Ipv4Net, T)>>(iter: I) -> Self {
        let mut t = PrefixTable::new();
        for (p, v) in iter {
            t.insert(p, v);
        }
        t
    }
}
