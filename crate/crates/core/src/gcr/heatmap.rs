use serde::{Deserialize, Serialize};

use super::model::Representation;
use super::{GcrError, GcrModel};
use crate::dataset::Label;
use crate::symbolization::mapped_values;

pub const HEATMAP_VERSION: u32 = 1;

/// One matrix of a class heatmap. `values[r][k]` is row `r`, column `k`;
/// row 0 and column 0 sit in the bottom-left corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapTile {
    /// Grid row of the tile (from symbol for FCAM, 0 otherwise).
    pub grid_row: usize,
    /// Grid column of the tile (to symbol for FCAM and CCAM, 0 for GTM).
    pub grid_col: usize,
    pub from_symbol: Option<usize>,
    pub to_symbol: Option<usize>,
    pub row_axis: String,
    pub col_axis: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub version: u32,
    pub variant: String,
    pub class: Label,
    pub shape: String,
    pub origin: String,
    pub vocabulary: Vec<f64>,
    pub min_value: f64,
    pub max_value: f64,
    pub tiles: Vec<HeatmapTile>,
}

fn positions(n: usize) -> Vec<String> {
    (0..n).map(|p| p.to_string()).collect()
}

fn position_tile(
    grid: (usize, usize),
    symbols: (Option<usize>, Option<usize>),
    n: usize,
    cell: impl Fn(usize, usize) -> f64,
) -> HeatmapTile {
    HeatmapTile {
        grid_row: grid.0,
        grid_col: grid.1,
        from_symbol: symbols.0,
        to_symbol: symbols.1,
        row_axis: "from_position".into(),
        col_axis: "to_position".into(),
        row_labels: positions(n),
        col_labels: positions(n),
        values: (0..n).map(|i| (0..n).map(|j| cell(i, j)).collect()).collect(),
    }
}

/// Heatmap of one class of a finalized model.
pub fn heatmap(model: &GcrModel, class: Label) -> Result<Heatmap, GcrError> {
    let c = model.class_index(class)?;
    let (s, n) = (model.symbol_count(), model.n());
    let vocabulary = mapped_values(s);
    let (shape, tiles) = match model.representation()? {
        Representation::Fcam(full) => {
            let mut tiles = Vec::with_capacity(s * s);
            for u in 0..s {
                for v in 0..s {
                    tiles.push(position_tile((u, v), (Some(u), Some(v)), n, |i, j| full[[c, u, v, i, j]]));
                }
            }
            ("fcam", tiles)
        }
        Representation::Ccam { matrices, .. } => {
            let tiles = (0..s)
                .map(|v| position_tile((0, v), (None, Some(v)), n, |i, j| matrices[[c, v, i, j]]))
                .collect();
            ("ccam", tiles)
        }
        Representation::Gtm(g) => {
            let tile = HeatmapTile {
                grid_row: 0,
                grid_col: 0,
                from_symbol: None,
                to_symbol: None,
                row_axis: "symbol".into(),
                col_axis: "position".into(),
                row_labels: vocabulary.iter().map(|v| v.to_string()).collect(),
                col_labels: positions(n),
                values: (0..s).map(|v| (0..n).map(|j| g[[c, v, j]]).collect()).collect(),
            };
            ("gtm", vec![tile])
        }
    };
    let all = tiles.iter().flat_map(|t| t.values.iter().flatten().copied());
    let (min_value, max_value) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    Ok(Heatmap {
        version: HEATMAP_VERSION,
        variant: model.variant().to_string(),
        class,
        shape: shape.into(),
        origin: "bottom-left".into(),
        vocabulary,
        min_value,
        max_value,
        tiles,
    })
}

/// Canonical JSON text of [`heatmap`], shared by file export and the service.
pub fn heatmap_json(model: &GcrModel, class: Label) -> Result<String, GcrError> {
    let map = heatmap(model, class)?;
    Ok(serde_json::to_string_pretty(&map).expect("heatmap values are finite") + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcr::{build, GcrVariant, Gsa, Shape, TrainSample, VectorReduce};
    use crate::symbolization::SymbolizedSeries;
    use ndarray::Array2;

    fn single_hot() -> (SymbolizedSeries, Array2<f64>) {
        let x = SymbolizedSeries {
            id: "hot".into(),
            label: 3,
            symbols: vec![0, 1, 1],
            values: vec![-1.0, 1.0, 1.0],
        };
        let mut lama = Array2::zeros((3, 3));
        lama[[0, 2]] = 1.0;
        (x, lama)
    }

    #[test]
    fn fcam_hot_cell_lands_in_its_tile() {
        let (x, lama) = single_hot();
        let model = build(&[TrainSample { series: &x, lama: &lama }], GcrVariant::new(Shape::Fcam, Gsa::Sum), 2).unwrap();
        let map = heatmap(&model, 3).unwrap();
        assert_eq!(map.tiles.len(), 4);
        assert_eq!(map.origin, "bottom-left");
        let hot: Vec<_> = map
            .tiles
            .iter()
            .filter(|t| t.values.iter().flatten().any(|&v| v > 0.0))
            .collect();
        assert_eq!(hot.len(), 1);
        assert_eq!((hot[0].grid_row, hot[0].grid_col), (0, 1));
        assert_eq!(hot[0].values[0][2], 1.0);
        assert_eq!(map.max_value, 1.0);
    }

    #[test]
    fn gtm_rows_are_symbols() {
        let (x, lama) = single_hot();
        let model = build(
            &[TrainSample { series: &x, lama: &lama }],
            GcrVariant::new(Shape::Gtm(VectorReduce::Max), Gsa::Sum),
            2,
        )
        .unwrap();
        let map = heatmap(&model, 3).unwrap();
        assert_eq!(map.tiles[0].row_labels, vec!["-1", "1"]);
        assert_eq!(map.tiles[0].values, vec![vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]);
        assert!(matches!(heatmap(&model, 9), Err(GcrError::UnknownClass(9))));
        assert_eq!(heatmap_json(&model, 3).unwrap(), heatmap_json(&model, 3).unwrap());
    }
}
