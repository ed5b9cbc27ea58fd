/* stand-in for https://keyguard.nimiq.com/lib/web-offline.js */
(function () { self.loaded = (self.loaded || []).concat("https://keyguard.nimiq.com/lib/web-offline.js"); })();
