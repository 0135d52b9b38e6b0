//! Class hierarchies: rooted trees whose nodes are sets of classes.

use std::collections::{BTreeMap, BinaryHeap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
struct Node {
    label: String,
    members: Vec<usize>,
    parent: Option<usize>,
    children: Vec<usize>,
}

/// A tree on classes `0..k`: the root holds every class, each leaf is a
/// singleton and the children of a node partition it.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    n_classes: usize,
    nodes: Vec<Node>,
    root: usize,
    leaf_of: Vec<usize>,
}

/// A node declared by the caller; `parent` indexes the same declaration list.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub label: String,
    pub members: Vec<usize>,
    pub parent: Option<usize>,
}

fn invalid(msg: String) -> Error {
    Error::invalid(format!("hierarchy: {msg}"))
}

impl Hierarchy {
    /// Builds a hierarchy from declared nodes. Classes of a multi-member
    /// node not covered by a declared child become implicit leaves.
    pub fn from_specs(n_classes: usize, specs: Vec<NodeSpec>) -> Result<Self> {
        if n_classes == 0 {
            return Err(invalid("no classes".into()));
        }
        let roots: Vec<usize> = (0..specs.len()).filter(|&i| specs[i].parent.is_none()).collect();
        if roots.len() != 1 {
            return Err(invalid(format!("expected exactly one root, found {}", roots.len())));
        }
        let mut nodes: Vec<Node> = Vec::with_capacity(specs.len() + n_classes);
        for spec in &specs {
            let mut members = spec.members.clone();
            members.sort_unstable();
            if members.is_empty() {
                return Err(invalid(format!("node {} is empty", spec.label)));
            }
            if members.windows(2).any(|w| w[0] == w[1]) {
                return Err(invalid(format!("node {} repeats a class", spec.label)));
            }
            if let Some(&c) = members.iter().find(|&&c| c >= n_classes) {
                return Err(invalid(format!("node {} has class {} beyond {n_classes}", spec.label, c + 1)));
            }
            if let Some(p) = spec.parent {
                if p >= specs.len() {
                    return Err(invalid(format!("node {} has an unknown parent", spec.label)));
                }
            }
            nodes.push(Node {
                label: spec.label.clone(),
                members,
                parent: spec.parent,
                children: Vec::new(),
            });
        }
        let root = roots[0];
        if nodes[root].members.len() != n_classes {
            return Err(invalid("the root must contain every class".into()));
        }
        for i in 0..nodes.len() {
            if let Some(p) = nodes[i].parent {
                if !is_proper_subset(&nodes[i].members, &nodes[p].members) {
                    return Err(invalid(format!(
                        "node {} is not a proper subset of its parent {}",
                        nodes[i].label, nodes[p].label
                    )));
                }
                nodes[p].children.push(i);
            }
        }
        for i in 0..specs.len() {
            let kids = nodes[i].children.clone();
            if nodes[i].members.len() == 1 && !kids.is_empty() {
                return Err(invalid(format!("singleton node {} has children", nodes[i].label)));
            }
            let mut covered: Vec<usize> = Vec::new();
            for &ch in &kids {
                covered.extend_from_slice(&nodes[ch].members);
            }
            covered.sort_unstable();
            if covered.windows(2).any(|w| w[0] == w[1]) {
                return Err(invalid(format!("children of node {} overlap", nodes[i].label)));
            }
            if nodes[i].members.len() > 1 {
                let missing: Vec<usize> = nodes[i]
                    .members
                    .iter()
                    .copied()
                    .filter(|c| covered.binary_search(c).is_err())
                    .collect();
                for c in missing {
                    let id = nodes.len();
                    nodes.push(Node {
                        label: (c + 1).to_string(),
                        members: vec![c],
                        parent: Some(i),
                        children: Vec::new(),
                    });
                    nodes[i].children.push(id);
                }
            }
        }
        let mut leaf_of = vec![usize::MAX; n_classes];
        for (i, node) in nodes.iter().enumerate() {
            if node.members.len() == 1 {
                leaf_of[node.members[0]] = i;
            }
        }
        for node in &mut nodes {
            node.children.sort_by_key(|&ch| ch);
        }
        Ok(Self {
            n_classes,
            nodes,
            root,
            leaf_of,
        })
    }

    /// Builds a hierarchy from a laminar family of class sets. Parents are
    /// the smallest strict supersets; the full set is added as root when
    /// missing.
    pub fn from_sets(n_classes: usize, sets: &[Vec<usize>]) -> Result<Self> {
        let mut sorted: Vec<Vec<usize>> = sets
            .iter()
            .map(|s| {
                let mut s = s.clone();
                s.sort_unstable();
                s
            })
            .collect();
        if !sorted.iter().any(|s| s.len() == n_classes) {
            sorted.push((0..n_classes).collect());
        }
        for i in 0..sorted.len() {
            for j in i + 1..sorted.len() {
                let (a, b) = (&sorted[i], &sorted[j]);
                if a == b {
                    return Err(invalid("duplicate node".into()));
                }
                let nested = is_proper_subset(a, b) || is_proper_subset(b, a);
                if !nested && intersects(a, b) {
                    return Err(invalid("nodes overlap without nesting".into()));
                }
            }
        }
        let specs = sorted
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let parent = (0..sorted.len())
                    .filter(|&j| j != i && is_proper_subset(s, &sorted[j]))
                    .min_by_key(|&j| sorted[j].len());
                NodeSpec {
                    label: format!("n{i}"),
                    members: s.clone(),
                    parent,
                }
            })
            .collect();
        Self::from_specs(n_classes, specs)
    }

    /// Parses `node_id parent_id member,member,...` lines (1-based classes,
    /// root parent `0`). Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw: Vec<(String, String, Vec<usize>, u64)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i as u64 + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "expected `node_id parent_id member,member,...`".into(),
                });
            }
            let members = parts[2]
                .split(',')
                .map(|m| match m.trim().parse::<usize>() {
                    Ok(c) if c >= 1 => Ok(c - 1),
                    _ => Err(Error::Parse {
                        line: line_no,
                        message: format!("bad class `{m}`"),
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            raw.push((parts[0].to_string(), parts[1].to_string(), members, line_no));
        }
        if raw.is_empty() {
            return Err(invalid("no nodes".into()));
        }
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, (id, _, _, line)) in raw.iter().enumerate() {
            if id == "0" {
                return Err(Error::Parse {
                    line: *line,
                    message: "node id 0 is reserved for the root's parent".into(),
                });
            }
            if index.insert(id.as_str(), i).is_some() {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("duplicate node id `{id}`"),
                });
            }
        }
        let n_classes = raw.iter().flat_map(|r| r.2.iter()).max().map_or(0, |&m| m + 1);
        let specs = raw
            .iter()
            .map(|(id, parent, members, line)| {
                let parent = if parent == "0" {
                    None
                } else {
                    Some(*index.get(parent.as_str()).ok_or_else(|| Error::Parse {
                        line: *line,
                        message: format!("unknown parent `{parent}`"),
                    })?)
                };
                Ok(NodeSpec {
                    label: id.clone(),
                    members: members.clone(),
                    parent,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_specs(n_classes, specs)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn label(&self, node: usize) -> &str {
        &self.nodes[node].label
    }

    pub fn members(&self, node: usize) -> &[usize] {
        &self.nodes[node].members
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.nodes[node].parent
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.nodes[node].children
    }

    pub fn leaf(&self, class: usize) -> Result<usize> {
        self.leaf_of.get(class).copied().ok_or(Error::LabelOutOfRange {
            label: class,
            n_classes: self.n_classes,
        })
    }

    /// Nodes from just below the root down to the leaf of `class`.
    pub fn path(&self, class: usize) -> Result<Vec<usize>> {
        let mut node = self.leaf(class)?;
        let mut path = Vec::new();
        while let Some(p) = self.nodes[node].parent {
            path.push(node);
            node = p;
        }
        path.reverse();
        Ok(path)
    }

    /// Number of levels, counting the root.
    pub fn depth(&self) -> usize {
        (0..self.n_classes)
            .map(|c| self.path(c).map_or(0, |p| p.len()))
            .max()
            .unwrap_or(0)
            + 1
    }

    fn membership(&self, set: &[usize]) -> Result<Vec<bool>> {
        let mut inside = vec![false; self.n_classes];
        for &c in set {
            *inside.get_mut(c).ok_or(Error::LabelOutOfRange {
                label: c,
                n_classes: self.n_classes,
            })? = true;
        }
        Ok(inside)
    }

    /// Size of the smallest disjoint cover of `set` by hierarchy nodes.
    ///
    /// A node belongs to the cover iff it lies inside `set` while its parent
    /// does not.
    pub fn representation_complexity(&self, set: &[usize]) -> Result<usize> {
        let inside = self.membership(set)?;
        let contained: Vec<bool> = self
            .nodes
            .iter()
            .map(|n| n.members.iter().all(|&c| inside[c]))
            .collect();
        Ok((0..self.nodes.len())
            .filter(|&i| contained[i] && self.nodes[i].parent.is_none_or(|p| !contained[p]))
            .count())
    }

    /// Greedy best-first search: nodes are visited by descending size,
    /// accepted when inside `set` and expanded when they only meet it.
    pub fn representation_complexity_greedy(&self, set: &[usize]) -> Result<usize> {
        let inside = self.membership(set)?;
        let target = inside.iter().filter(|&&b| b).count();
        let mut queue = BinaryHeap::new();
        // ties broken towards the lower node index
        queue.push((self.nodes[self.root].members.len(), std::cmp::Reverse(self.root)));
        let (mut covered, mut picked) = (0, 0);
        while covered < target {
            let Some((_, std::cmp::Reverse(node))) = queue.pop() else {
                break;
            };
            let members = &self.nodes[node].members;
            let hits = members.iter().filter(|&&c| inside[c]).count();
            if hits == members.len() {
                covered += hits;
                picked += 1;
            } else if hits > 0 {
                for &ch in &self.nodes[node].children {
                    queue.push((self.nodes[ch].members.len(), std::cmp::Reverse(ch)));
                }
            }
        }
        Ok(picked)
    }
}

fn is_proper_subset(a: &[usize], b: &[usize]) -> bool {
    a.len() < b.len() && a.iter().all(|x| b.binary_search(x).is_ok())
}

fn intersects(a: &[usize], b: &[usize]) -> bool {
    a.iter().any(|x| b.binary_search(x).is_ok())
}
