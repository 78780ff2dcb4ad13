//! Template-based biography corpus.
//!
//! Every table carries a name, birth date and occupation, optionally a
//! nationality and birth place, and four distractor records (spouse,
//! children, height, alma mater) that never reach the text. Which records are
//! realized is decided by the attribute alone, so gold key-fact labels are
//! known at generation time.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{linearize, write_parallel, write_token_lines, ParallelSample, Record, Table, TextSequence, UnlabeledSample};
use crate::error::{Error, Result};

const FIRST: &str = "john mary james linda robert susan michael karen david nancy william lisa richard betty joseph helen \
thomas sandra charles donna daniel carol matthew ruth anthony sharon mark laura paul emily steven anna andrew kate \
kenneth diana george julia edward alice brian grace ronald irene kevin clara jason nina jeffrey vera ryan olga gary \
maria eric sofia peter elena frank denise";
const LAST: &str = "smith jones taylor brown wilson evans roberts johnson walker wright robinson thompson white hughes \
edwards green hall wood harris lewis martin jackson clarke clark turner hill scott cooper morris ward moore king \
watson baker harrison morgan patel young allen mitchell anderson phillips lee bell parker davis miller garcia lopez \
murphy kelly ross howard cox lane fischer weber novak margaret";
const CITY: &str = "melbourne sydney london paris berlin madrid rome vienna boston chicago toronto dublin oslo lisbon \
prague warsaw athens cairo mumbai tokyo seoul lima bogota denver seattle houston atlanta glasgow leeds bristol lyon \
milan naples munich hamburg zurich geneva brussels amsterdam stockholm victoria";
const SCHOOL: &str = "harvard yale princeton stanford cornell columbia duke rice emory tufts vassar purdue auburn baylor clemson";
const MONTH: &str = "january february march april may june july august september october november december";
const NATIONALITY: &str = "american australian british canadian french german italian spanish irish scottish dutch \
swedish norwegian danish polish russian greek brazilian mexican indian chinese japanese korean egyptian nigerian \
kenyan argentine chilean austrian belgian";
const OCCUPATION: &str = "actor comedian writer painter singer poet journalist politician lawyer physician engineer \
architect novelist composer pianist drummer guitarist footballer cricketer boxer sculptor photographer historian \
economist chemist physicist mathematician biologist teacher diplomat banker director producer dancer designer chef \
farmer soldier judge philosopher";

/// Records that may appear in the text.
pub const REALIZED: [&str; 5] = ["name", "birth_date", "birth_place", "nationality", "occupation"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub samples: usize,
    /// Share of samples whose table is dropped.
    pub unlabeled_fraction: f64,
    pub p_nationality: f64,
    pub p_birth_place: f64,
    /// How many first names and surnames to draw from (at most 60 each).
    pub name_pool: usize,
    pub distractors: bool,
    pub seed: u64,
    pub id_prefix: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            samples: 1000,
            unlabeled_fraction: 0.0,
            p_nationality: 0.6,
            p_birth_place: 0.6,
            name_pool: 60,
            distractors: true,
            seed: 0,
            id_prefix: "synth".into(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let p = |x: f64| (0.0..=1.0).contains(&x);
        if self.samples == 0
            || !p(self.unlabeled_fraction)
            || !p(self.p_nationality)
            || !p(self.p_birth_place)
            || !(2..=60).contains(&self.name_pool)
        {
            return Err(Error::Config(format!("invalid synth settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynthCorpus {
    pub parallel: Vec<ParallelSample>,
    /// Gold key-fact labels over each parallel table's linearization.
    pub gold: Vec<Vec<u8>>,
    pub unlabeled: Vec<UnlabeledSample>,
}

#[derive(Serialize, Deserialize)]
struct GoldLine {
    id: String,
    labels: Vec<u8>,
}

impl SynthCorpus {
    /// Writes `parallel.jsonl`, `gold_labels.jsonl` and `unlabeled.txt`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_parallel(dir.join("parallel.jsonl"), &self.parallel)?;
        let mut gold = String::new();
        for (s, labels) in self.parallel.iter().zip(&self.gold) {
            gold.push_str(&serde_json::to_string(&GoldLine {
                id: s.id.clone(),
                labels: labels.clone(),
            })?);
            gold.push('\n');
        }
        let path = dir.join("gold_labels.jsonl");
        std::fs::write(&path, gold).map_err(|e| Error::io(&path, e))?;
        let texts: Vec<Vec<String>> = self.unlabeled.iter().map(|u| u.text.0.clone()).collect();
        write_token_lines(dir.join("unlabeled.txt"), &texts)
    }
}

fn pool(s: &'static str) -> Vec<&'static str> {
    s.split_whitespace().collect()
}

fn pick<'a, R: Rng>(xs: &[&'a str], rng: &mut R) -> &'a str {
    xs.choose(rng).expect("non-empty pool")
}

fn article(next: &str) -> &'static str {
    if next.starts_with(['a', 'e', 'i', 'o', 'u']) {
        "an"
    } else {
        "a"
    }
}

struct Person {
    name: String,
    date: String,
    place: Option<String>,
    nationality: Option<String>,
    occupation: String,
}

impl Person {
    /// `[nationality] occupation` with its article.
    fn description(&self) -> String {
        let np = match &self.nationality {
            Some(n) => format!("{n} {}", self.occupation),
            None => self.occupation.clone(),
        };
        format!("{} {np}", article(&np))
    }

    fn render(&self, template: usize) -> String {
        let (name, date, desc) = (&self.name, &self.date, self.description());
        let place = self.place.as_ref().map(|p| format!(" in {p}")).unwrap_or_default();
        match template {
            0 => format!("{name} ( born {date}{place} ) is {desc} ."),
            1 => format!("{name} , {desc} , was born on {date}{place} ."),
            _ => format!("{name} is {desc} who was born{place} on {date} ."),
        }
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let first: Vec<_> = pool(FIRST).into_iter().take(spec.name_pool).collect();
    let last: Vec<_> = pool(LAST).into_iter().take(spec.name_pool).collect();
    let (cities, schools, months) = (pool(CITY), pool(SCHOOL), pool(MONTH));
    let (nats, occs) = (pool(NATIONALITY), pool(OCCUPATION));

    let mut out = SynthCorpus::default();
    for i in 0..spec.samples {
        let id = format!("{}-{i:06}", spec.id_prefix);
        let (f, l) = (pick(&first, &mut rng), pick(&last, &mut rng));
        let person = Person {
            name: format!("{f} {l}"),
            date: format!("{} {} {}", rng.gen_range(10..=28), pick(&months, &mut rng), rng.gen_range(1900..=1999)),
            place: rng.gen_bool(spec.p_birth_place).then(|| pick(&cities, &mut rng).to_string()),
            nationality: rng.gen_bool(spec.p_nationality).then(|| pick(&nats, &mut rng).to_string()),
            occupation: pick(&occs, &mut rng).to_string(),
        };
        let text = person.render(rng.gen_range(0..3));

        let mut records = vec![Record::from_raw("name", &person.name)?, Record::from_raw("birth_date", &person.date)?];
        if let Some(p) = &person.place {
            records.push(Record::from_raw("birth_place", p)?);
        }
        if let Some(n) = &person.nationality {
            records.push(Record::from_raw("nationality", n)?);
        }
        records.push(Record::from_raw("occupation", &person.occupation)?);
        if spec.distractors {
            let spouse_first = loop {
                let s = pick(&first, &mut rng);
                if s != f {
                    break s;
                }
            };
            let spouse_last = loop {
                let s = pick(&last, &mut rng);
                if s != l {
                    break s;
                }
            };
            records.push(Record::from_raw("spouse", &format!("{spouse_first} {spouse_last}"))?);
            records.push(Record::from_raw("children", &rng.gen_range(1..=9).to_string())?);
            records.push(Record::from_raw("height", &format!("1.{}", rng.gen_range(55..=95)))?);
            records.push(Record::from_raw("alma_mater", &format!("{} university", pick(&schools, &mut rng)))?);
        }
        let table = Table::new(records)?;
        let text = TextSequence::new(text.split_whitespace().map(String::from).collect());

        if rng.gen_bool(spec.unlabeled_fraction) {
            out.unlabeled.push(UnlabeledSample { id, text });
        } else {
            let gold = linearize(&table)
                .tokens
                .iter()
                .map(|t| u8::from(REALIZED.contains(&t.attribute.as_str())))
                .collect();
            out.gold.push(gold);
            out.parallel.push(ParallelSample { id, table, text });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyfact::{annotate, StopWords};
    use crate::pseudo::LexiconTagger;

    fn spec(samples: usize) -> SynthSpec {
        SynthSpec {
            samples,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn ten_samples_round_trip_through_jsonl() {
        let c = generate(&spec(10)).unwrap();
        assert_eq!(c.parallel.len(), 10);
        let dir = tempfile::tempdir().unwrap();
        c.write(dir.path()).unwrap();
        let back = crate::corpus::load_parallel(dir.path().join("parallel.jsonl"), crate::corpus::InputFormat::Jsonl).unwrap();
        assert_eq!(back, c.parallel);
        let text = std::fs::read_to_string(dir.path().join("parallel.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 10);
    }

    #[test]
    fn same_seed_same_corpus() {
        assert_eq!(generate(&spec(50)).unwrap(), generate(&spec(50)).unwrap());
        assert_ne!(generate(&spec(50)).unwrap(), generate(&SynthSpec { seed: 4, ..spec(50) }).unwrap());
    }

    #[test]
    fn gold_labels_agree_with_annotation() {
        let c = generate(&spec(500)).unwrap();
        let stops = StopWords::english();
        let (mut same, mut total) = (0, 0);
        for (s, gold) in c.parallel.iter().zip(&c.gold) {
            let labels = annotate(&linearize(&s.table), &s.text, &stops);
            same += labels.iter().zip(gold).filter(|(a, b)| a == b).count();
            total += gold.len();
        }
        assert!(same as f64 / total as f64 >= 0.99, "{same}/{total}");
    }

    #[test]
    fn key_facts_are_a_proper_subset_of_the_table() {
        let c = generate(&spec(100)).unwrap();
        for gold in &c.gold {
            let ones = gold.iter().filter(|&&g| g == 1).count();
            assert!(ones > 0 && ones < gold.len());
        }
    }

    #[test]
    fn unlabeled_fraction_is_respected() {
        let c = generate(&SynthSpec {
            unlabeled_fraction: 0.5,
            ..spec(2000)
        })
        .unwrap();
        let frac = c.unlabeled.len() as f64 / 2000.0;
        assert!((frac - 0.5).abs() < 0.05, "{frac}");
    }

    #[test]
    fn every_text_word_is_in_the_pos_lexicon() {
        let lex = LexiconTagger::english();
        let c = generate(&spec(300)).unwrap();
        for s in &c.parallel {
            for w in s.text.iter() {
                if w.parse::<f64>().is_err() {
                    assert!(lex.knows(w), "{w}");
                }
            }
        }
    }
}
