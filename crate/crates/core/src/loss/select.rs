//! Per-pixel viewpoint selection by matching distance.

/// Which views contribute at each pixel.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum SelectionMode {
    /// The better-matching half of the candidate views.
    #[default]
    Half,
    /// Every in-bounds view.
    All,
}

impl std::str::FromStr for SelectionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "half" => Ok(SelectionMode::Half),
            "all" => Ok(SelectionMode::All),
            other => Err(format!("unknown selection mode `{other}` (expected half or all)")),
        }
    }
}

impl std::fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SelectionMode::Half => "half",
            SelectionMode::All => "all",
        })
    }
}

/// Selected views per pixel, stored as `mask[view][pixel]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewSelection {
    pub selection_size: usize,
    pub mask: Vec<Vec<bool>>,
}

impl ViewSelection {
    pub fn pixels(&self) -> usize {
        self.mask.first().map_or(0, Vec::len)
    }

    /// Selected view indices at `pixel`, ascending.
    pub fn selected_at(&self, pixel: usize) -> Vec<usize> {
        (0..self.mask.len()).filter(|&k| self.mask[k][pixel]).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.iter().all(|m| m.iter().all(|&s| !s))
    }
}

/// Keep, per pixel, the `selection_size` views with the smallest finite
/// distance, ties broken by view index. `distances[view][pixel]`; infinite
/// entries are never selected, so pixels with few valid views use all of them.
pub fn select_views(distances: &[Vec<f64>], mode: &SelectionMode) -> ViewSelection {
    let views = distances.len();
    let pixels = distances.first().map_or(0, Vec::len);
    let selection_size = match mode {
        SelectionMode::Half => views / 2,
        SelectionMode::All => views,
    };
    let mut mask = vec![vec![false; pixels]; views];
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(views);
    for p in 0..pixels {
        order.clear();
        order.extend((0..views).map(|k| (distances[k][p], k)).filter(|(e, _)| e.is_finite()));
        let take = selection_size.min(order.len());
        if take == 0 {
            continue;
        }
        if take < order.len() {
            order.select_nth_unstable_by(take - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        for &(_, k) in &order[..take] {
            mask[k][p] = true;
        }
    }
    ViewSelection { selection_size, mask }
}
