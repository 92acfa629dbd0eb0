//! Weight groups: a compressed belief over the input space.

use serde::{Deserialize, Serialize};

use crate::counting_oracle::Answer;
use crate::error::{Error, Result};
use crate::input_space::{InputRegion, TotalOrder};

/// How a split group's weight is shared by its halves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitWeight {
    /// Halves receive weight in proportion to their cardinality.
    #[default]
    Proportional,
    /// Both halves inherit the parent's weight.
    Verbatim,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightGroup {
    pub region: InputRegion,
    pub weight: f64,
}

impl WeightGroup {
    /// Weight of one input of the group.
    pub fn input_weight(&self) -> f64 {
        self.weight * (-self.region.log2_cardinality()).exp2()
    }
}

/// Groups partitioning the search space, kept in total-order sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGroupList {
    groups: Vec<WeightGroup>,
}

impl WeightGroupList {
    /// The whole space as a single group of weight 1.
    pub fn new(space: InputRegion) -> Self {
        WeightGroupList { groups: vec![WeightGroup { region: space, weight: 1.0 }] }
    }

    pub fn from_groups(groups: Vec<WeightGroup>) -> Self {
        WeightGroupList { groups }
    }

    pub fn groups(&self) -> &[WeightGroup] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.groups.iter().map(|g| g.weight).sum()
    }

    /// Index of the heaviest group; ties go to the earliest.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, g) in self.groups.iter().enumerate() {
            if best.is_none_or(|(_, w)| g.weight > w) {
                best = Some((i, g.weight));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Smallest index whose cumulative weight reaches one half.
    pub fn select_split_group(&self) -> Result<usize> {
        if self.groups.is_empty() {
            return Err(Error::EmptyList);
        }
        let mut cumulative = 0.0;
        for (i, g) in self.groups.iter().enumerate() {
            cumulative += g.weight;
            if cumulative >= 0.5 {
                return Ok(i);
            }
        }
        // Rounding can leave the total just under 1/2.
        Ok(self.groups.iter().rposition(|g| g.weight > 0.0).unwrap_or(self.groups.len() - 1))
    }

    /// Splits group `mid` in half under `order`.
    pub fn split(&self, mid: usize, order: &TotalOrder) -> Result<(InputRegion, InputRegion)> {
        let group = self.groups.get(mid).ok_or(Error::EmptyList)?;
        group.region.split_half(order).map_err(|_| Error::SingletonGroup(mid))
    }

    /// Replaces group `mid` by its two halves, applies the multiplicative
    /// update for oracle answer `bit`, and renormalizes. `bit = true` means
    /// the left half was judged at least as promising.
    /// Drops all belief in a single input known not to reach the target and
    /// renormalizes. The group stays in the list with weight zero.
    pub fn eliminate(&mut self, idx: usize) -> Result<()> {
        let g = self.groups.get_mut(idx).ok_or(Error::EmptyList)?;
        if !g.region.is_singleton() {
            return Err(Error::InvalidParameter(format!("group {idx} is not a single input")));
        }
        g.weight = 0.0;
        let total = self.total_weight();
        if total > 0.0 {
            for g in &mut self.groups {
                g.weight /= total;
            }
        }
        Ok(())
    }

    pub fn update_weights(
        &mut self,
        mid: usize,
        halves: (InputRegion, InputRegion),
        bit: bool,
        p: f64,
        mode: SplitWeight,
    ) -> Result<()> {
        self.update_with_answer(mid, halves, Answer::from_bit(bit), p, mode)
    }

    /// As [`update_weights`](Self::update_weights); `Neither` scales the two
    /// new halves by `p` and every other group by `1 - p`.
    pub fn update_with_answer(
        &mut self,
        mid: usize,
        halves: (InputRegion, InputRegion),
        answer: Answer,
        p: f64,
        mode: SplitWeight,
    ) -> Result<()> {
        if !(0.0..0.5).contains(&p) {
            return Err(Error::InvalidParameter(format!("p must lie in [0, 1/2), got {p}")));
        }
        let parent = self.groups.get(mid).ok_or(Error::EmptyList)?;
        if parent.region.is_singleton() {
            return Err(Error::SingletonGroup(mid));
        }
        let (left, right) = halves;
        let (wl, wr) = match mode {
            SplitWeight::Proportional => {
                let total = parent.region.log2_cardinality();
                let fl = (left.log2_cardinality() - total).exp2();
                let fr = (right.log2_cardinality() - total).exp2();
                (parent.weight * fl, parent.weight * fr)
            }
            SplitWeight::Verbatim => (parent.weight, parent.weight),
        };
        self.groups[mid] = WeightGroup { region: left, weight: wl };
        self.groups.insert(mid + 1, WeightGroup { region: right, weight: wr });

        for (i, g) in self.groups.iter_mut().enumerate() {
            let favored = match answer {
                Answer::Left => i <= mid,
                Answer::Right => i > mid,
                Answer::Neither => i != mid && i != mid + 1,
            };
            g.weight *= if favored { 1.0 - p } else { p };
        }
        let total = self.total_weight();
        if total > 0.0 {
            for g in &mut self.groups {
                g.weight /= total;
            }
        }
        Ok(())
    }
}
