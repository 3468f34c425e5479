//! Seeded synthetic corpora with known structure, used by the test suites and
//! for smoke-testing the pipeline end to end.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Document, RatingTriple};

/// Documents drawn from `topics` disjoint vocabularies of `terms_per_topic`
/// words each. Every document samples `tokens_per_doc` tokens uniformly from
/// its topic's vocabulary. Document order is shuffled so ids carry no topic
/// information; the topic is stored as the label.
pub fn topic_corpus(
    topics: usize,
    docs_per_topic: usize,
    terms_per_topic: usize,
    tokens_per_doc: usize,
    seed: u64,
) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut topic_of: Vec<usize> = (0..topics)
        .flat_map(|t| std::iter::repeat_n(t, docs_per_topic))
        .collect();
    topic_of.shuffle(&mut rng);
    topic_of
        .into_iter()
        .enumerate()
        .map(|(i, topic)| {
            let words: Vec<String> = (0..tokens_per_doc)
                .map(|_| format!("t{topic}w{}", rng.gen_range(0..terms_per_topic)))
                .collect();
            Document {
                id: format!("d{i}"),
                text: words.join(" "),
                label: Some(format!("topic{topic}")),
            }
        })
        .collect()
}

/// Parameters of [`block_ratings`].
#[derive(Clone, Debug)]
pub struct BlockRatingsSpec {
    pub users: usize,
    pub items: usize,
    pub blocks: usize,
    pub terms_per_block: usize,
    pub tokens_per_item: usize,
    /// Probability that a user rated an item of its own block.
    pub p_in_block: f64,
    /// Probability that a user rated an item of another block.
    pub p_out_block: f64,
    pub seed: u64,
}

impl Default for BlockRatingsSpec {
    fn default() -> Self {
        BlockRatingsSpec {
            users: 500,
            items: 300,
            blocks: 10,
            terms_per_block: 30,
            tokens_per_item: 15,
            p_in_block: 0.3,
            p_out_block: 0.05,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BlockRatings {
    /// Item content, one document per item; the label is the block.
    pub items: Vec<Document>,
    pub user_ids: Vec<String>,
    pub user_blocks: Vec<usize>,
    pub item_blocks: Vec<usize>,
    pub triples: Vec<RatingTriple>,
}

/// Users and items belong to latent blocks. Ratings inside a block are high
/// (0.75 or 1.0), across blocks low (0.0 or 0.25). Item text is drawn from
/// the vocabulary of the item's block.
pub fn block_ratings(spec: &BlockRatingsSpec) -> BlockRatings {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let user_blocks: Vec<usize> = (0..spec.users).map(|_| rng.gen_range(0..spec.blocks)).collect();
    let item_blocks: Vec<usize> = (0..spec.items).map(|i| i % spec.blocks).collect();
    let mut item_blocks_shuffled = item_blocks;
    item_blocks_shuffled.shuffle(&mut rng);
    let items = item_blocks_shuffled
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let words: Vec<String> = (0..spec.tokens_per_item)
                .map(|_| format!("b{b}w{}", rng.gen_range(0..spec.terms_per_block)))
                .collect();
            Document {
                id: format!("i{i}"),
                text: words.join(" "),
                label: Some(format!("block{b}")),
            }
        })
        .collect();
    let mut triples = Vec::new();
    for (u, &ub) in user_blocks.iter().enumerate() {
        for (i, &ib) in item_blocks_shuffled.iter().enumerate() {
            let same = ub == ib;
            let p = if same { spec.p_in_block } else { spec.p_out_block };
            if rng.gen::<f64>() < p {
                let high = rng.gen::<bool>();
                let rating = match (same, high) {
                    (true, true) => 1.0,
                    (true, false) => 0.75,
                    (false, true) => 0.25,
                    (false, false) => 0.0,
                };
                triples.push(RatingTriple {
                    user: u as u32,
                    item: i as u32,
                    rating,
                });
            }
        }
    }
    BlockRatings {
        items,
        user_ids: (0..spec.users).map(|u| format!("u{u}")).collect(),
        user_blocks,
        item_blocks: item_blocks_shuffled,
        triples,
    }
}

impl BlockRatings {
    /// Ratings as `user<TAB>item<TAB>rating` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                self.user_ids[t.user as usize], self.items[t.item as usize].id, t.rating
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topic_corpus_shape() {
        let docs = topic_corpus(3, 4, 5, 6, 1);
        assert_eq!(docs.len(), 12);
        for d in &docs {
            let topic = d.label.as_ref().unwrap().trim_start_matches("topic");
            assert_eq!(d.text.split(' ').count(), 6);
            assert!(d.text.split(' ').all(|w| w.starts_with(&format!("t{topic}w"))));
        }
        assert_eq!(docs, topic_corpus(3, 4, 5, 6, 1));
    }

    #[test]
    fn block_ratings_shape() {
        let spec = BlockRatingsSpec {
            users: 40,
            items: 30,
            ..Default::default()
        };
        let data = block_ratings(&spec);
        assert_eq!(data.items.len(), 30);
        for t in &data.triples {
            let same = data.user_blocks[t.user as usize] == data.item_blocks[t.item as usize];
            assert_eq!(same, t.rating >= 0.75);
        }
        let lines = data.to_tsv();
        assert_eq!(lines.lines().count(), data.triples.len());
    }
}
