use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use super::SuperpixelMap;

/// Split labels into 4-connected fragments. Returns per-pixel fragment ids
/// (numbered in raster order of each fragment's first pixel) and the count.
pub fn label_fragments(width: usize, height: usize, labels: &[u32]) -> (Vec<u32>, usize) {
    let mut frag = vec![u32::MAX; width * height];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..width * height {
        if frag[start] != u32::MAX {
            continue;
        }
        let l = labels[start];
        frag[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % width, i / width);
            let mut visit = |j: usize| {
                if frag[j] == u32::MAX && labels[j] == l {
                    frag[j] = next;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - width);
            }
            if y + 1 < height {
                visit(i + width);
            }
        }
        next += 1;
    }
    (frag, next as usize)
}

/// Make every region 4-connected and at least `target_size / 2` pixels.
///
/// Each connected fragment becomes its own region; undersized regions are
/// then absorbed, smallest first, into the neighbor sharing the longest
/// boundary (ties go to the lower fragment id). Oversized regions are left
/// alone. Output labels are compacted in raster order.
pub fn enforce_connectivity(map: &SuperpixelMap, target_size: f64) -> SuperpixelMap {
    let (w, h) = (map.width(), map.height());
    let (frag, n) = label_fragments(w, h, map.labels());
    let min_size = target_size / 2.0;

    let mut size = vec![0usize; n];
    for &f in &frag {
        size[f as usize] += 1;
    }
    let mut adj: Vec<BTreeMap<u32, usize>> = vec![BTreeMap::new(); n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let a = frag[i];
            let mut touch = |b: u32| {
                if a != b {
                    *adj[a as usize].entry(b).or_default() += 1;
                    *adj[b as usize].entry(a).or_default() += 1;
                }
            };
            if x + 1 < w {
                touch(frag[i + 1]);
            }
            if y + 1 < h {
                touch(frag[i + w]);
            }
        }
    }

    let mut parent: Vec<u32> = (0..n as u32).collect();
    let mut alive = n;
    let mut heap: BinaryHeap<Reverse<(usize, u32)>> = (0..n)
        .filter(|&r| (size[r] as f64) < min_size)
        .map(|r| Reverse((size[r], r as u32)))
        .collect();
    while let Some(Reverse((sz, r))) = heap.pop() {
        let ri = r as usize;
        if alive == 1 {
            break;
        }
        if parent[ri] != r || size[ri] != sz || (sz as f64) >= min_size {
            continue;
        }
        let Some((&into, _)) = adj[ri]
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        else {
            continue;
        };
        let ii = into as usize;
        let edges = std::mem::take(&mut adj[ri]);
        for (other, count) in edges {
            adj[other as usize].remove(&r);
            if other != into {
                *adj[ii].entry(other).or_default() += count;
                *adj[other as usize].entry(into).or_default() += count;
            }
        }
        size[ii] += size[ri];
        size[ri] = 0;
        parent[ri] = into;
        alive -= 1;
        if (size[ii] as f64) < min_size {
            heap.push(Reverse((size[ii], into)));
        }
    }

    let mut root = vec![0u32; n];
    for r in 0..n {
        let mut cur = r as u32;
        while parent[cur as usize] != cur {
            cur = parent[cur as usize];
        }
        root[r] = cur;
    }
    let merged: Vec<u32> = frag.iter().map(|&f| root[f as usize]).collect();
    SuperpixelMap::compacted(w, h, &merged)
}
