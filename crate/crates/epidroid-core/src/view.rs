//! Attributed GUI widget trees and their content-free abstractions.

use serde::{Deserialize, Serialize};

/// Widget categories the simulator can render. The first five are
/// state-bearing; the rest are inert content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidgetKind {
    Switch,
    Input,
    Expandable,
    Container,
    RadioGroup,
    Button,
    Label,
    ListItem,
    Root,
}

impl WidgetKind {
    /// Stable one-byte tag used when hashing trees.
    fn tag(self) -> u8 {
        match self {
            WidgetKind::Switch => 1,
            WidgetKind::Input => 2,
            WidgetKind::Expandable => 3,
            WidgetKind::Container => 4,
            WidgetKind::RadioGroup => 5,
            WidgetKind::Button => 6,
            WidgetKind::Label => 7,
            WidgetKind::ListItem => 8,
            WidgetKind::Root => 9,
        }
    }
}

/// Dynamic attributes of a rendered widget. All fields are optional; a
/// content-free abstraction has every field erased.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeAttrs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checked: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Static placeholder hint on inputs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expanded: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item_count: Option<u32>,
    /// Options a radio group renders; static per widget.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub options: Vec<String>,
}

impl NodeAttrs {
    pub fn is_empty(&self) -> bool {
        self.checked.is_none()
            && self.selected.is_none()
            && self.text.is_none()
            && self.hint.is_none()
            && self.expanded.is_none()
            && self.item_count.is_none()
            && self.options.is_empty()
    }
}

/// One node of an attributed GUI component tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewNode {
    pub widget_id: String,
    pub kind: WidgetKind,
    pub depth: u32,
    #[serde(default, skip_serializing_if = "NodeAttrs::is_empty")]
    pub attrs: NodeAttrs,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<ViewNode>,
}

impl ViewNode {
    pub fn new(widget_id: impl Into<String>, kind: WidgetKind, depth: u32) -> Self {
        ViewNode {
            widget_id: widget_id.into(),
            kind,
            depth,
            attrs: NodeAttrs::default(),
            children: Vec::new(),
        }
    }

    /// Total node count including this node.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(ViewNode::size).sum::<usize>()
    }

    /// Depth-first walk over all nodes.
    pub fn walk(&self, f: &mut impl FnMut(&ViewNode)) {
        f(self);
        for child in &self.children {
            child.walk(f);
        }
    }

    /// Find a node by widget id anywhere in the tree.
    pub fn find(&self, widget_id: &str) -> Option<&ViewNode> {
        if self.widget_id == widget_id {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(widget_id))
    }

    /// Stable 64-bit fingerprint of the tree (FNV-1a over a canonical
    /// byte stream). Attributes participate when present, so concrete
    /// and abstract trees hash differently.
    pub fn signature(&self) -> u64 {
        let mut hash = 0xcbf2_9ce4_8422_2325u64;
        self.hash_into(&mut hash);
        hash
    }

    fn hash_into(&self, hash: &mut u64) {
        fnv(hash, &[self.kind.tag()]);
        fnv(hash, self.widget_id.as_bytes());
        fnv(hash, &self.depth.to_le_bytes());
        if let Some(c) = self.attrs.checked {
            fnv(hash, &[0xa1, c as u8]);
        }
        if let Some(sel) = &self.attrs.selected {
            fnv(hash, &[0xa2]);
            fnv(hash, sel.as_bytes());
        }
        if let Some(text) = &self.attrs.text {
            fnv(hash, &[0xa3]);
            fnv(hash, text.as_bytes());
        }
        if let Some(hint) = &self.attrs.hint {
            fnv(hash, &[0xa7]);
            fnv(hash, hint.as_bytes());
        }
        if let Some(e) = self.attrs.expanded {
            fnv(hash, &[0xa4, e as u8]);
        }
        if let Some(n) = self.attrs.item_count {
            fnv(hash, &[0xa5]);
            fnv(hash, &n.to_le_bytes());
        }
        for opt in &self.attrs.options {
            fnv(hash, &[0xa6]);
            fnv(hash, opt.as_bytes());
        }
        fnv(hash, &[0xfe]);
        for child in &self.children {
            child.hash_into(hash);
        }
        fnv(hash, &[0xff]);
    }
}

fn fnv(hash: &mut u64, bytes: &[u8]) {
    for &b in bytes {
        *hash ^= b as u64;
        *hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
}
