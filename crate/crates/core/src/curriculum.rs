//! Subcase sampling and stage scheduling.

use itertools::Itertools;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::{Level, Pos};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CurriculumError {
    #[error("m = {m} is outside 1..={n}")]
    BadM { m: usize, n: usize },
    #[error("batch size must be at least 1")]
    EmptyBatch,
    #[error("every {m}-box subcase is already solved")]
    NoValidSubcase { m: usize },
    #[error("invalid curriculum config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumConfig {
    pub boards_per_iteration: usize,
    pub advance_threshold: f64,
    pub plateau_window: u32,
    pub start_m: usize,
    pub i_max_initial: u32,
    /// Consecutive zero-success iterations before the step cap doubles.
    pub zero_success_window: u32,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            boards_per_iteration: 500,
            advance_threshold: 0.95,
            plateau_window: 5,
            start_m: 2,
            i_max_initial: 500,
            zero_success_window: 10,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<(), CurriculumError> {
        if self.boards_per_iteration == 0
            || self.plateau_window == 0
            || self.start_m == 0
            || self.i_max_initial == 0
            || self.zero_success_window == 0
        {
            return Err(CurriculumError::InvalidConfig(
                "all counts must be positive",
            ));
        }
        if !(self.advance_threshold > 0.0 && self.advance_threshold <= 1.0) {
            return Err(CurriculumError::InvalidConfig(
                "advance_threshold must be in (0, 1]",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumStage {
    pub m: usize,
    /// Box count of the master instance; `m` never exceeds it.
    pub n: usize,
    pub best_rate: f64,
    pub no_improve_count: u32,
    /// Iterations completed so far, over the whole run.
    pub iteration: u32,
    pub i_max: u32,
    pub zero_success_streak: u32,
}

impl CurriculumStage {
    pub fn initial(config: &CurriculumConfig, n: usize) -> Self {
        CurriculumStage {
            m: config.start_m.min(n),
            n,
            best_rate: 0.0,
            no_improve_count: 0,
            iteration: 0,
            i_max: config.i_max_initial,
            zero_success_streak: 0,
        }
    }
}

const IMPROVEMENT_EPS: f64 = 1e-9;

/// Records one iteration's success rate and returns the next stage.
///
/// `m` advances when the rate reaches the threshold, or when the best rate of
/// the stage is positive and has not improved for `plateau_window`
/// iterations. `i_max` doubles after `zero_success_window` consecutive
/// iterations with no success at all.
pub fn update_stage(
    stage: &CurriculumStage,
    rate: f64,
    config: &CurriculumConfig,
) -> CurriculumStage {
    let rate = rate.clamp(0.0, 1.0);
    let mut next = stage.clone();
    next.iteration += 1;
    if rate > stage.best_rate + IMPROVEMENT_EPS {
        next.best_rate = rate;
        next.no_improve_count = 0;
    } else {
        next.no_improve_count += 1;
    }
    if rate == 0.0 {
        next.zero_success_streak += 1;
        if next.zero_success_streak >= config.zero_success_window {
            next.i_max = next.i_max.saturating_mul(2);
            next.zero_success_streak = 0;
        }
    } else {
        next.zero_success_streak = 0;
    }
    let plateau = next.best_rate > 0.0 && next.no_improve_count >= config.plateau_window;
    if (rate >= config.advance_threshold || plateau) && next.m < next.n {
        next.m += 1;
        next.best_rate = 0.0;
        next.no_improve_count = 0;
        next.zero_success_streak = 0;
    }
    next
}

/// Number of distinct initial subcases, `C(n, m)^2`.
pub fn sample_space_size(n: usize, m: usize) -> u128 {
    if m > n {
        return 0;
    }
    let c: u128 = num_integer::binomial(n as u128, m as u128);
    c * c
}

fn check_m(level: &Level, m: usize) -> Result<(), CurriculumError> {
    let n = level.num_boxes();
    if m == 0 || m > n {
        return Err(CurriculumError::BadM { m, n });
    }
    Ok(())
}

fn pick(all: &[Pos], idx: impl IntoIterator<Item = usize>) -> Vec<Pos> {
    idx.into_iter().map(|i| all[i]).collect()
}

/// A random `m`-box subcase: boxes and goals are independent uniform
/// `m`-subsets of the master's, walls and player start unchanged.
pub fn sample_subcase<R: Rng>(
    level: &Level,
    m: usize,
    rng: &mut R,
) -> Result<Level, CurriculumError> {
    check_m(level, m)?;
    let n = level.num_boxes();
    let boxes = pick(level.initial_boxes(), index::sample(rng, n, m));
    let goals = pick(level.goals(), index::sample(rng, n, m));
    Ok(level
        .subcase(boxes, goals)
        .expect("subsets of a valid level"))
}

fn already_solved(sub: &Level) -> bool {
    sub.is_goal(&sub.initial_state())
}

/// `count` subcases that are not already solved. When the whole sample
/// space fits in the batch it is enumerated, shuffled and cycled instead of
/// sampled.
pub fn generate_batch<R: Rng>(
    level: &Level,
    m: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Level>, CurriculumError> {
    check_m(level, m)?;
    if count == 0 {
        return Err(CurriculumError::EmptyBatch);
    }
    let n = level.num_boxes();
    if sample_space_size(n, m) <= count as u128 {
        let subsets: Vec<Vec<usize>> = (0..n).combinations(m).collect();
        let mut all: Vec<Level> = subsets
            .iter()
            .cartesian_product(&subsets)
            .map(|(b, g)| {
                level
                    .subcase(
                        pick(level.initial_boxes(), b.iter().copied()),
                        pick(level.goals(), g.iter().copied()),
                    )
                    .expect("subsets of a valid level")
            })
            .filter(|s| !already_solved(s))
            .collect();
        if all.is_empty() {
            return Err(CurriculumError::NoValidSubcase { m });
        }
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            all.shuffle(rng);
            out.extend(all.iter().take(count - out.len()).cloned());
        }
        return Ok(out);
    }
    // the space is larger than the batch, so solved subcases are a small
    // fraction and rejection terminates quickly
    let mut out = Vec::with_capacity(count);
    let mut rejected = 0usize;
    while out.len() < count {
        let sub = sample_subcase(level, m, rng)?;
        if already_solved(&sub) {
            rejected += 1;
            if rejected > 1000 * count {
                return Err(CurriculumError::NoValidSubcase { m });
            }
            continue;
        }
        out.push(sub);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// 16 boxes on row 2, 16 goals on row 5 of an open room.
    fn master16() -> Level {
        let mut rows = vec!["#".repeat(18)];
        rows.push(format!("#{}#", " ".repeat(16)));
        rows.push(format!("#{}#", "$".repeat(16)));
        rows.push(format!("#{}#", " ".repeat(16)));
        rows.push(format!("#{}@#", " ".repeat(15)));
        rows.push(format!("#{}#", ".".repeat(16)));
        rows.push(format!("#{}#", " ".repeat(16)));
        rows.push("#".repeat(18));
        Level::parse(&rows.join("\n")).unwrap()
    }

    const TWO_ROOMS: &str = "\
#########
#   #   #
# $.#.$ #
#   #   #
## ### ##
#       #
#   @   #
#########";

    fn cfg() -> CurriculumConfig {
        CurriculumConfig::default()
    }

    #[test]
    fn full_subset_is_the_master() {
        let level = Level::parse(TWO_ROOMS).unwrap();
        let sub = sample_subcase(&level, 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(sub, level);
    }

    #[test]
    fn bad_m() {
        let level = Level::parse(TWO_ROOMS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            sample_subcase(&level, 0, &mut rng),
            Err(CurriculumError::BadM { m: 0, n: 2 })
        );
        assert_eq!(
            sample_subcase(&level, 3, &mut rng),
            Err(CurriculumError::BadM { m: 3, n: 2 })
        );
        assert_eq!(
            generate_batch(&level, 3, 5, &mut rng),
            Err(CurriculumError::BadM { m: 3, n: 2 })
        );
        assert_eq!(
            generate_batch(&level, 1, 0, &mut rng),
            Err(CurriculumError::EmptyBatch)
        );
    }

    #[test]
    fn subcase_shape() {
        let level = master16();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for m in 1..=16 {
            let sub = sample_subcase(&level, m, &mut rng).unwrap();
            assert_eq!(sub.num_boxes(), m);
            assert_eq!(sub.goals().len(), m);
            assert_eq!(sub.player_start(), level.player_start());
            assert!(sub
                .initial_boxes()
                .iter()
                .all(|b| level.initial_boxes().contains(b)));
            assert!(sub.goals().iter().all(|g| level.goals().contains(g)));
            assert!(sub.floor_cells().eq(level.floor_cells()));
        }
    }

    #[test]
    fn sixteen_choose_three() {
        assert_eq!(sample_space_size(16, 3), 313_600);
        assert_eq!(sample_space_size(16, 16), 1);
        assert_eq!(sample_space_size(3, 4), 0);
    }

    #[test]
    fn box_frequency_is_uniform() {
        let level = master16();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 5;
        let samples = 100_000;
        let mut counts = [0usize; 16];
        for _ in 0..samples {
            let sub = sample_subcase(&level, m, &mut rng).unwrap();
            for b in sub.initial_boxes() {
                counts[b.col as usize - 1] += 1;
            }
        }
        for c in counts {
            let f = c as f64 / samples as f64;
            assert!((f - m as f64 / 16.0).abs() <= 0.01, "frequency {f}");
        }
    }

    #[test]
    fn two_rooms_half_solvable() {
        let level = Level::parse(TWO_ROOMS).unwrap();
        let subsets: Vec<Level> =
            generate_batch(&level, 1, 4, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut distinct = subsets.clone();
        distinct.sort_by_key(|l| (l.initial_boxes().to_vec(), l.goals().to_vec()));
        distinct.dedup();
        assert_eq!(distinct.len(), 4);
        let solvable = distinct
            .iter()
            .filter(|s| oracle::solvable(s, &s.initial_state(), 100_000).unwrap())
            .count();
        assert_eq!(solvable, 2);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let trials = 4000;
        let hits = (0..trials)
            .filter(|_| {
                let s = sample_subcase(&level, 1, &mut rng).unwrap();
                oracle::solvable(&s, &s.initial_state(), 100_000).unwrap()
            })
            .count();
        let f = hits as f64 / trials as f64;
        assert!((f - 0.5).abs() < 0.03, "solvable fraction {f}");
    }

    #[test]
    fn batch_skips_solved_and_is_reproducible() {
        // one of the two boxes already sits on a goal
        let level = Level::parse("#######\n#@*$ .#\n#######").unwrap();
        let a = generate_batch(&level, 1, 50, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a.len(), 50);
        assert!(a.iter().all(|s| !s.is_goal(&s.initial_state())));
        let b = generate_batch(&level, 1, 50, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);

        let big = master16();
        let x = generate_batch(&big, 3, 20, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let y = generate_batch(&big, 3, 20, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert_eq!(x, y);
        assert!(x.iter().all(|s| s.num_boxes() == 3));
    }

    #[test]
    fn solved_master_has_no_valid_full_subcase() {
        let level = Level::parse("#####\n#@* #\n#####").unwrap();
        assert_eq!(
            generate_batch(&level, 1, 3, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(CurriculumError::NoValidSubcase { m: 1 })
        );
    }

    #[test]
    fn enumeration_covers_space() {
        let level = Level::parse(TWO_ROOMS).unwrap();
        let batch = generate_batch(&level, 1, 9, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(batch.len(), 9);
        // two full passes over the four subcases, then one more
        for chunk in batch.chunks(4).take(2) {
            let mut keys: Vec<_> = chunk
                .iter()
                .map(|l| (l.initial_boxes()[0], l.goals()[0]))
                .collect();
            keys.sort();
            keys.dedup();
            assert_eq!(keys.len(), 4);
        }
    }

    fn run(rates: &[f64], stage: CurriculumStage) -> Vec<CurriculumStage> {
        let mut s = stage;
        rates
            .iter()
            .map(|&r| {
                s = update_stage(&s, r, &cfg());
                s.clone()
            })
            .collect()
    }

    #[test]
    fn plateau_advance() {
        let start = CurriculumStage::initial(&cfg(), 4);
        let history = run(&[0.80, 0.82, 0.82, 0.82, 0.82, 0.82, 0.82], start);
        let nonimproving: Vec<u32> = history.iter().map(|s| s.no_improve_count).collect();
        assert_eq!(&nonimproving[..6], &[0, 0, 1, 2, 3, 4]);
        assert!(history[..6].iter().all(|s| s.m == 2));
        // the fifth non-improving iteration advances and resets counters
        assert_eq!(history[6].m, 3);
        assert_eq!(history[6].no_improve_count, 0);
        assert_eq!(history[6].best_rate, 0.0);
        assert_eq!(history[6].iteration, 7);
    }

    #[test]
    fn threshold_advance() {
        let start = CurriculumStage::initial(&cfg(), 4);
        let s = update_stage(&start, 0.96, &cfg());
        assert_eq!(s.m, 3);
        let s = update_stage(&s, 0.95, &cfg());
        assert_eq!(s.m, 4);
        let s = update_stage(&s, 1.0, &cfg());
        assert_eq!(s.m, 4, "m is capped at n");
    }

    #[test]
    fn zero_success_doubles_step_cap() {
        let start = CurriculumStage::initial(&cfg(), 4);
        let history = run(&[0.0; 10], start);
        assert!(history[..9].iter().all(|s| s.i_max == 500));
        assert_eq!(history[9].i_max, 1000);
        assert_eq!(history[9].m, 2);
        assert_eq!(history[9].zero_success_streak, 0);
        let more = run(&[0.0; 10], history[9].clone());
        assert_eq!(more[9].i_max, 2000);
    }

    #[test]
    fn a_success_breaks_the_zero_streak() {
        let start = CurriculumStage::initial(&cfg(), 4);
        let mut rates = vec![0.0; 9];
        rates.push(0.1);
        rates.extend([0.0; 9]);
        let history = run(&rates, start);
        assert!(history.iter().all(|s| s.i_max == 500));
    }

    #[test]
    fn start_m_clamped() {
        assert_eq!(CurriculumStage::initial(&cfg(), 1).m, 1);
        assert_eq!(CurriculumStage::initial(&cfg(), 3).m, 2);
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        let bad = CurriculumConfig {
            advance_threshold: 1.5,
            ..cfg()
        };
        assert!(bad.validate().is_err());
        let bad = CurriculumConfig {
            plateau_window: 0,
            ..cfg()
        };
        assert!(bad.validate().is_err());
    }
}
