//! Paragraph evidence behind dendrogram nodes.

use std::collections::BTreeSet;

use crate::cluster::Dendrogram;
use crate::corpus::EmbeddedCorpus;

/// Read-only view joining a corpus to the dendrogram built over it.
#[derive(Debug, Clone, Copy)]
pub struct Evidence<'a> {
    corpus: &'a EmbeddedCorpus,
    tree: &'a Dendrogram,
}

impl<'a> Evidence<'a> {
    /// `None` when the dendrogram was not built over this corpus.
    pub fn new(corpus: &'a EmbeddedCorpus, tree: &'a Dendrogram) -> Option<Self> {
        (tree.leaves() == corpus.len()).then_some(Self { corpus, tree })
    }

    pub fn corpus(&self) -> &'a EmbeddedCorpus {
        self.corpus
    }

    pub fn tree(&self) -> &'a Dendrogram {
        self.tree
    }

    pub fn size(&self, node: usize) -> usize {
        self.tree.members(node).len()
    }

    /// Up to `cap` paragraph texts under `node`, spread evenly over its
    /// members in corpus order.
    pub fn texts(&self, node: usize, cap: usize) -> Vec<String> {
        self.sample(node, cap).into_iter().map(|i| self.corpus.paragraphs[i].text.clone()).collect()
    }

    /// Sorted distinct document ids contributing to `node`.
    pub fn doc_ids(&self, node: usize) -> Vec<String> {
        let ids: BTreeSet<&str> =
            self.tree.members(node).iter().map(|&i| self.corpus.paragraphs[i].doc_id.as_str()).collect();
        ids.into_iter().map(str::to_string).collect()
    }

    fn sample(&self, node: usize, cap: usize) -> Vec<usize> {
        let members = self.tree.members(node);
        if members.len() <= cap {
            return members.to_vec();
        }
        (0..cap).map(|k| members[k * members.len() / cap]).collect()
    }
}
