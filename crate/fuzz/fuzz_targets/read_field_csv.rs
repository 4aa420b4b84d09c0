#![no_main]

use libfuzzer_sys::fuzz_target;
use varexp_core::grid::Grid;
use varexp_core::io::read_field_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = read_field_csv(data) {
        assert_eq!(table.coords.len(), table.rows() * table.dim);
        assert!(table.values.iter().all(|v| v.is_finite()));
        if table.dim == 1 {
            if let Ok(grid) = Grid::unit_interval(table.rows()) {
                let _ = table.into_scalar(&grid);
            }
        }
    }
});
